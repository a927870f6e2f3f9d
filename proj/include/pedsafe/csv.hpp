#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pedsafe::csv {

/// RFC-4180 table: a header plus string cells. Quoted fields may contain
/// commas, doubled quotes and line breaks. A UTF-8 BOM on the first field is
/// stripped.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column, or -1.
    int column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace pedsafe::csv
