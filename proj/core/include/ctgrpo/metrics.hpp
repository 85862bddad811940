#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace ctgrpo {

/// Formats a double with round-trip precision ("%.17g" trimmed to shortest).
std::string format_double(double v);

/// Header-first CSV writer. Cells are written verbatim; callers keep them
/// free of commas.
class CsvWriter {
 public:
  CsvWriter() = default;
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  bool is_open() const { return out_.is_open(); }
  void row(const std::vector<std::string>& cells);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
};

}  // namespace ctgrpo
