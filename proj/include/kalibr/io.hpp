#pragma once

#include "kalibr/gaussian.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kalibr::io {

/// 17 significant digits; parses back to the same double.
std::string format_double(double v);

nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const Matrix& m);
Vector vector_from_json(const nlohmann::json& j);
Matrix matrix_from_json(const nlohmann::json& j);

/// Pretty-printed JSON with every double at 17 significant digits;
/// non-finite doubles become null.
std::string dump_json(const nlohmann::json& j, int indent = 2);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Comma-separated writer; every double goes through format_double.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  CsvWriter& cell(double v);
  CsvWriter& cell(long v);
  CsvWriter& cell(int v) { return cell(static_cast<long>(v)); }
  CsvWriter& empty_cell();
  void end_row();

 private:
  void separator();

  std::ofstream out_;
  bool row_started_ = false;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;
  std::vector<double> numeric_column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// One row of the per-iteration calibration trace.
struct IterationRow {
  int iter = 0;
  Vector mean;
  std::optional<Vector> cov_diag;
  double phi = 0.0;
};

/// Columns: iter, m_1..m_N, C_diag_1..C_diag_N, phi.
void write_iterations_csv(const std::filesystem::path& path, const std::vector<IterationRow>& rows);

/// Flat `key = value` text; `#` starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

}  // namespace kalibr::io
