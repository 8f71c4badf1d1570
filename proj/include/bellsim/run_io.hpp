#ifndef BELLSIM_RUN_IO_HPP
#define BELLSIM_RUN_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace bellsim {

using CsvValue = std::variant<std::int64_t, double, std::string>;

/// CSV with a header row, '.' decimal separator and 17 significant digits;
/// identical inputs produce byte-identical files.
class CsvWriter {
public:
    CsvWriter(std::filesystem::path path, std::vector<std::string> columns,
              std::vector<std::string> descriptions);

    void row(const std::vector<CsvValue>& values);

    /// Writes the CSV and a sibling .schema.json documenting every column.
    void finish();

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::vector<std::string> columns_;
    std::vector<std::string> descriptions_;
    std::string body_;
    bool finished_ = false;
};

std::string format_double(double v);  // 17 significant digits, '.' separator

/// FNV-1a 64-bit over the file bytes, hex encoded.
std::string file_hash(const std::filesystem::path& path);

/// Write-then-rename so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& content);

struct ManifestCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunManifest {
    std::string experiment;
    std::string config_echo;  // JSON text
    std::string sector_meta;  // JSON text: basis and Hamiltonian dimensions
    std::string version;
    double wall_clock_seconds = 0.0;
    std::vector<ManifestCheck> checks;
    std::vector<std::filesystem::path> outputs;

    bool all_pass() const;
    void write(const std::filesystem::path& path) const;
};

} // namespace bellsim

#endif
