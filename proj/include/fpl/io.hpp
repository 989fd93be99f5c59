#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace fpl {

// Shortest round-tripping decimal form of a double ("%.17g" trimmed).
std::string format_double(double v);
double parse_double(std::string_view text);
std::vector<std::string> split_csv_line(std::string_view line);

// Streams rows of doubles under a fixed header. Output is locale-independent
// and byte-identical for identical inputs.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void row(const std::vector<double>& values);
    void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

private:
    std::ofstream out_;
    std::size_t columns_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace fpl
