#pragma once

#include <string>
#include <vector>

#include "ppap/harness.hpp"

namespace ppap {

// exact column set; every writer/reader in the project goes through these
inline constexpr const char* kCsvHeader =
    "run-id,method,strength-or-r,task-id,stage,accuracy,euclidean-score,seed,wall-time-seconds";

// serialize one row (no trailing newline); empty euclidean renders as an
// empty field
std::string csv_line(const CsvRow& row);

// atomic write, header + one line per row
void write_csv(const std::string& path, const std::vector<CsvRow>& rows);

// strict reader: header and field count must match the schema
std::vector<CsvRow> read_csv(const std::string& path);

// grouped per-task accuracy bars (final stage), one bar family per
// (method, strength); the plain-finetuning family renders gray
void write_bar_chart(const std::string& path, const std::vector<CsvRow>& rows);

// retention/adaptation scatter: one averaged point per (method, strength)
// plus the three dashed reference lines (pretrain target, degraded baseline,
// finetuning target)
void write_scatter_chart(const std::string& path, const std::vector<CsvRow>& rows);

} // namespace ppap
