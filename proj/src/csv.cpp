#include "clab/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "clab/errors.hpp"

namespace clab {

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    if (header.empty()) throw InvalidArgument("CSV header must not be empty");
    for (const auto& h : header) add(h);
    end_row();
    rows_ = 0;
}

CsvWriter& CsvWriter::add(const std::string& field) {
    if (pending_ > 0) line_ += ',';
    line_ += quote(field);
    ++pending_;
    return *this;
}

CsvWriter& CsvWriter::add(double value) { return add(number(value)); }
CsvWriter& CsvWriter::add(int value) { return add(std::to_string(value)); }
CsvWriter& CsvWriter::add(std::uint64_t value) { return add(std::to_string(value)); }
CsvWriter& CsvWriter::add(bool value) { return add(std::string(value ? "1" : "0")); }

void CsvWriter::end_row() {
    if (pending_ != columns_) {
        throw InvalidState("CSV row has " + std::to_string(pending_) + " fields, header has " +
                           std::to_string(columns_));
    }
    text_ += line_;
    text_ += '\n';
    line_.clear();
    pending_ = 0;
    ++rows_;
}

void CsvWriter::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot open " + path + " for writing");
    out << text_;
    if (!out) throw InvalidArgument("failed writing " + path);
}

std::string CsvWriter::quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string q = "\"";
    for (char c : field) {
        if (c == '"') q += '"';
        q += c;
    }
    q += '"';
    return q;
}

std::string CsvWriter::number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

}  // namespace clab
