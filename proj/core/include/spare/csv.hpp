#pragma once

#include <string>
#include <vector>

namespace spare {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Reads a UTF-8 CSV file with a mandatory header row. Supports quoted
/// fields with doubled-quote escapes and embedded newlines inside quotes.
CsvTable read_csv(const std::string& path);

/// Writes rows with minimal quoting (only fields containing , " or newline).
void write_csv(const std::string& path, const CsvTable& table);

}  // namespace spare
