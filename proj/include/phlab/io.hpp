#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace phlab::io {

/// Shortest round-trip decimal form, so equal doubles always print alike.
std::string fmt(double v);
std::string fmt(long long v);

/// CSV with a mandatory header row, comma separated, LF line endings.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);
    /// Throws std::invalid_argument when the row width differs from the header.
    void add(std::vector<std::string> row);
    void write(const std::filesystem::path& path) const;
    std::size_t rows() const { return rows_.size(); }
    const std::vector<std::string>& header() const { return header_; }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// INI text: `[section]` headers and `key = value` lines; `#` and `;` start comments.
class Config {
public:
    static Config load(const std::filesystem::path& path);
    static Config parse(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
    void set(const std::string& section, const std::string& key, const std::string& value);
    /// Sections and keys in sorted order.
    std::string dump() const;
    const std::map<std::string, std::map<std::string, std::string>>& sections() const { return data_; }

private:
    std::map<std::string, std::map<std::string, std::string>> data_;
};

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Writes `manifest.sha256` in dir: one "<hash>  <name>" line per file, sorted by
/// name, in the format `sha256sum -c` accepts.
void write_manifest(const std::filesystem::path& dir, std::vector<std::string> files);

}  // namespace phlab::io
