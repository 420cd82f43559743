#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clab {

/// RFC 4180 writer: comma separated, LF line endings, fields quoted only
/// when they contain a comma, quote, CR or LF.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    CsvWriter& add(const std::string& field);
    CsvWriter& add(const char* field) { return add(std::string(field)); }
    CsvWriter& add(double value);
    CsvWriter& add(int value);
    CsvWriter& add(std::uint64_t value);
    CsvWriter& add(bool value);
    /// Ends the current row; throws if its field count differs from the header.
    void end_row();

    std::size_t rows() const { return rows_; }
    const std::string& text() const { return text_; }
    void save(const std::string& path) const;

    static std::string quote(const std::string& field);
    /// 12 significant digits with a '.' decimal point; nan, inf and -inf spelled out.
    static std::string number(double value);

private:
    std::size_t columns_;
    std::size_t pending_ = 0;
    std::size_t rows_ = 0;
    std::string line_;
    std::string text_;
};

}  // namespace clab
