#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stratx/types.hpp"

namespace stratx {

// Column roles for typed ingestion. Names refer to header fields; an empty
// name / empty list means the role is absent (e.g. no outcome at design
// time). A single "*" in covariates means "all columns not claimed by
// another role".
struct CsvSchema {
    std::string outcome;
    std::string assignment;
    std::string block;
    std::vector<std::string> design_covariates;
    std::vector<std::string> covariates;
};

// Raw RFC-4180 table (quoted fields, "" escapes, CRLF or LF).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

// Typed ingestion. Block labels are re-indexed to 1..M in first-appearance
// order. Throws CsvError with row/column location on missing columns,
// unparseable numbers, or ragged rows.
ExperimentData ingest_csv(const CsvTable& table, const CsvSchema& schema);
ExperimentData ingest_csv_file(const std::string& path, const CsvSchema& schema);

// Canonical emission: columns block, z, y, w1..wk, x1..xp (present fields
// only), doubles at 17 significant digits so ingest(emit(data)) is
// bit-for-bit.
void emit_csv(const ExperimentData& data, std::ostream& out);
std::string emit_csv_string(const ExperimentData& data);

// Schema matching emit_csv's column names for the fields present in data.
CsvSchema canonical_schema(const ExperimentData& data);

// Format one double with 17 significant digits (shared with table writers).
std::string format_double(double v);

}  // namespace stratx
