#include "bellsim/run_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bellsim/errors.hpp"

namespace bellsim {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(std::filesystem::path path, std::vector<std::string> columns,
                     std::vector<std::string> descriptions)
    : path_(std::move(path)), columns_(std::move(columns)),
      descriptions_(std::move(descriptions)) {
    if (columns_.size() != descriptions_.size())
        throw ConfigError("every CSV column needs a description");
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (i) body_ += ',';
        body_ += columns_[i];
    }
    body_ += '\n';
}

void CsvWriter::row(const std::vector<CsvValue>& values) {
    if (values.size() != columns_.size()) throw ConfigError("CSV row width mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) body_ += ',';
        if (std::holds_alternative<std::int64_t>(values[i]))
            body_ += std::to_string(std::get<std::int64_t>(values[i]));
        else if (std::holds_alternative<double>(values[i]))
            body_ += format_double(std::get<double>(values[i]));
        else
            body_ += std::get<std::string>(values[i]);
    }
    body_ += '\n';
}

void CsvWriter::finish() {
    if (finished_) return;
    atomic_write(path_, body_);

    nlohmann::json schema;
    schema["file"] = path_.filename().string();
    schema["columns"] = nlohmann::json::array();
    for (std::size_t i = 0; i < columns_.size(); ++i)
        schema["columns"].push_back({{"name", columns_[i]}, {"description", descriptions_[i]}});
    std::filesystem::path schema_path = path_;
    schema_path += ".schema.json";
    atomic_write(schema_path, schema.dump(2) + "\n");
    finished_ = true;
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot hash missing file " + path.string());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

bool RunManifest::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

void RunManifest::write(const std::filesystem::path& path) const {
    nlohmann::json doc;
    doc["experiment"] = experiment;
    doc["version"] = version;
    doc["wall_clock_seconds"] = wall_clock_seconds;
    doc["config"] = nlohmann::json::parse(config_echo.empty() ? "{}" : config_echo);
    if (!sector_meta.empty()) doc["sector"] = nlohmann::json::parse(sector_meta);
    doc["checks"] = nlohmann::json::array();
    for (const auto& c : checks)
        doc["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    doc["outputs"] = nlohmann::json::array();
    for (const auto& f : outputs)
        doc["outputs"].push_back({{"path", f.filename().string()}, {"fnv1a64", file_hash(f)}});
    atomic_write(path, doc.dump(2) + "\n");
}

} // namespace bellsim
