#include "stratx/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "stratx/errors.hpp"

namespace stratx {

namespace {

// Splits one logical CSV record starting at `pos`; handles quoted fields and
// embedded newlines. Returns false at end of input.
bool next_record(const std::string& text, std::size_t& pos, std::vector<std::string>& fields,
                 int row_for_errors) {
    fields.clear();
    if (pos >= text.size()) return false;
    std::string field;
    bool in_quotes = false;
    bool saw_any = false;
    while (pos < text.size()) {
        const char ch = text[pos];
        if (in_quotes) {
            if (ch == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field.push_back('"');
                    pos += 2;
                } else {
                    in_quotes = false;
                    ++pos;
                }
            } else {
                field.push_back(ch);
                ++pos;
            }
            continue;
        }
        if (ch == '"') {
            if (!field.empty())
                throw CsvError(row_for_errors, static_cast<int>(fields.size()) + 1,
                               "quote inside unquoted field");
            in_quotes = true;
            saw_any = true;
            ++pos;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
            saw_any = true;
            ++pos;
        } else if (ch == '\r' || ch == '\n') {
            if (ch == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
            ++pos;
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(ch);
            saw_any = true;
            ++pos;
        }
    }
    if (in_quotes) throw CsvError(row_for_errors, static_cast<int>(fields.size()) + 1,
                                  "unterminated quoted field");
    if (!saw_any && fields.empty()) return false;
    fields.push_back(std::move(field));
    return true;
}

double parse_double(const std::string& s, int row, int col) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || first == last)
        throw CsvError(row, col, "cannot parse '" + s + "' as a number");
    return value;
}

int find_column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return static_cast<int>(j);
    return -1;
}

int require_column(const std::vector<std::string>& header, const std::string& name) {
    const int j = find_column(header, name);
    if (j < 0) throw CsvError(1, 0, "missing column '" + name + "'");
    return j;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    CsvTable table;
    std::size_t pos = 0;
    std::vector<std::string> fields;
    if (!next_record(text, pos, fields, 1)) throw CsvError(1, 0, "empty input; header required");
    table.header = fields;
    int row = 2;
    while (next_record(text, pos, fields, row)) {
        if (fields.size() != table.header.size())
            throw CsvError(row, static_cast<int>(fields.size()),
                           "ragged row: expected " + std::to_string(table.header.size()) +
                               " fields, found " + std::to_string(fields.size()));
        table.rows.push_back(fields);
        ++row;
    }
    return table;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvError(0, 0, "cannot open '" + path + "'");
    return read_csv(in);
}

ExperimentData ingest_csv(const CsvTable& table, const CsvSchema& schema) {
    const int n = static_cast<int>(table.rows.size());
    if (n == 0) throw CsvError(1, 0, "no data rows");

    const int outcome_col = schema.outcome.empty() ? -1 : require_column(table.header, schema.outcome);
    const int assign_col =
        schema.assignment.empty() ? -1 : require_column(table.header, schema.assignment);
    const int block_col = schema.block.empty() ? -1 : require_column(table.header, schema.block);

    std::vector<int> w_cols;
    for (const auto& name : schema.design_covariates)
        w_cols.push_back(require_column(table.header, name));

    std::vector<int> x_cols;
    if (schema.covariates.size() == 1 && schema.covariates[0] == "*") {
        std::vector<bool> claimed(table.header.size(), false);
        auto claim = [&](int j) { if (j >= 0) claimed[static_cast<std::size_t>(j)] = true; };
        claim(outcome_col);
        claim(assign_col);
        claim(block_col);
        for (int j : w_cols) claim(j);
        for (std::size_t j = 0; j < table.header.size(); ++j)
            if (!claimed[j]) x_cols.push_back(static_cast<int>(j));
    } else {
        for (const auto& name : schema.covariates)
            x_cols.push_back(require_column(table.header, name));
    }

    ExperimentData data;
    data.X.resize(n, static_cast<Eigen::Index>(x_cols.size()));
    data.W.resize(n, static_cast<Eigen::Index>(w_cols.size()));
    if (outcome_col >= 0) data.Y.resize(n);
    if (assign_col >= 0) data.Z.resize(n);

    std::vector<int> block_labels;
    block_labels.reserve(static_cast<std::size_t>(n));
    std::vector<std::string> label_names;  // first-appearance order
    auto label_index = [&](const std::string& s) {
        for (std::size_t j = 0; j < label_names.size(); ++j)
            if (label_names[j] == s) return static_cast<int>(j);
        label_names.push_back(s);
        return static_cast<int>(label_names.size()) - 1;
    };

    for (int i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const int csv_row = i + 2;  // header is row 1
        if (outcome_col >= 0) data.Y(i) = parse_double(row[outcome_col], csv_row, outcome_col + 1);
        if (assign_col >= 0) {
            const double z = parse_double(row[assign_col], csv_row, assign_col + 1);
            if (z != 0.0 && z != 1.0)
                throw CsvError(csv_row, assign_col + 1, "assignment must be 0 or 1");
            data.Z(i) = static_cast<int>(z);
        }
        block_labels.push_back(block_col >= 0 ? label_index(row[static_cast<std::size_t>(block_col)]) : 0);
        for (std::size_t j = 0; j < w_cols.size(); ++j)
            data.W(i, static_cast<Eigen::Index>(j)) =
                parse_double(row[static_cast<std::size_t>(w_cols[j])], csv_row, w_cols[j] + 1);
        for (std::size_t j = 0; j < x_cols.size(); ++j)
            data.X(i, static_cast<Eigen::Index>(j)) =
                parse_double(row[static_cast<std::size_t>(x_cols[j])], csv_row, x_cols[j] + 1);
    }

    data.blocks = BlockStructure::from_labels(block_labels);
    if (data.has_assignment()) {
        data.blocks.treated.assign(static_cast<std::size_t>(data.blocks.num_blocks()), 0);
        for (int i = 0; i < n; ++i)
            data.blocks.treated[static_cast<std::size_t>(data.blocks.block_of[static_cast<std::size_t>(i)])] +=
                data.Z(i);
    }
    return data;
}

ExperimentData ingest_csv_file(const std::string& path, const CsvSchema& schema) {
    return ingest_csv(read_csv_file(path), schema);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void emit_csv(const ExperimentData& data, std::ostream& out) {
    out << "block";
    if (data.has_assignment()) out << ",z";
    if (data.has_outcome()) out << ",y";
    for (int j = 0; j < data.k(); ++j) out << ",w" << (j + 1);
    for (int j = 0; j < data.p(); ++j) out << ",x" << (j + 1);
    out << "\n";
    for (int i = 0; i < data.n(); ++i) {
        out << (data.blocks.block_of[static_cast<std::size_t>(i)] + 1);
        if (data.has_assignment()) out << ',' << data.Z(i);
        if (data.has_outcome()) out << ',' << format_double(data.Y(i));
        for (int j = 0; j < data.k(); ++j) out << ',' << format_double(data.W(i, j));
        for (int j = 0; j < data.p(); ++j) out << ',' << format_double(data.X(i, j));
        out << "\n";
    }
}

std::string emit_csv_string(const ExperimentData& data) {
    std::ostringstream os;
    emit_csv(data, os);
    return os.str();
}

CsvSchema canonical_schema(const ExperimentData& data) {
    CsvSchema s;
    s.block = "block";
    if (data.has_assignment()) s.assignment = "z";
    if (data.has_outcome()) s.outcome = "y";
    for (int j = 0; j < data.k(); ++j) s.design_covariates.push_back("w" + std::to_string(j + 1));
    for (int j = 0; j < data.p(); ++j) s.covariates.push_back("x" + std::to_string(j + 1));
    return s;
}

}  // namespace stratx
