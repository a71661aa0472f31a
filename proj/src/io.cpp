#include "phlab/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

namespace phlab::io {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt(long long v) { return std::to_string(v); }

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    if (header_.empty()) throw std::invalid_argument("CsvTable: header must not be empty");
}

void CsvTable::add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw std::invalid_argument("CsvTable: row width differs from header");
    rows_.push_back(std::move(row));
}

namespace {

void write_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) os << ',';
        const std::string& c = cells[i];
        if (c.find_first_of(",\"\n") == std::string::npos) {
            os << c;
        } else {
            os << '"';
            for (char ch : c) os << (ch == '"' ? "\"\"" : std::string(1, ch));
            os << '"';
        }
    }
    os << '\n';
}

}  // namespace

void CsvTable::write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_line(os, header_);
    for (const auto& r : rows_) write_line(os, r);
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot read config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

Config Config::parse(const std::string& text) {
    boost::property_tree::ptree tree;
    std::istringstream is(text);
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    Config c;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            c.data_[""][section] = body.data();
            continue;
        }
        for (const auto& [key, value] : body) c.data_[section][key] = value.data();
    }
    return c;
}

bool Config::has(const std::string& section, const std::string& key) const {
    const auto s = data_.find(section);
    return s != data_.end() && s->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key, const std::string& fallback) const {
    const auto s = data_.find(section);
    if (s == data_.end()) return fallback;
    const auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    data_[section][key] = value;
}

std::string Config::dump() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [section, keys] : data_) {
        if (!first) os << '\n';
        first = false;
        if (!section.empty()) os << '[' << section << "]\n";
        for (const auto& [k, v] : keys) os << k << " = " << v << '\n';
    }
    return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest init failed");
    char buf[1 << 15];
    while (is) {
        is.read(buf, sizeof buf);
        if (is.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(is.gcount())) != 1)
            throw std::runtime_error("sha256: digest update failed");
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw std::runtime_error("sha256: digest final failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

void write_manifest(const std::filesystem::path& dir, std::vector<std::string> files) {
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    std::ofstream os(dir / "manifest.sha256", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write manifest in " + dir.string());
    for (const auto& f : files) os << sha256_file(dir / f) << "  " << f << '\n';
}

}  // namespace phlab::io
