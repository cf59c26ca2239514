#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "detox/errors.hpp"

// Minimal RFC 4180 CSV: quoted fields, "" escapes, embedded newlines.

namespace detox::csv {

struct Row {
    std::vector<std::string> fields;
    std::size_t line = 0;  // 1-based line the row started on
};

/// Parses a whole CSV document. Accepts \n and \r\n row endings.
inline std::vector<Row> parse(std::string_view text) {
    std::vector<Row> rows;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool quote_closed = false;  // field was quoted; only , or EOL may follow
    bool row_open = false;
    std::size_t line = 1;
    std::size_t row_line = 1;

    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
        quote_closed = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back({std::move(fields), row_line});
        fields.clear();
        row_open = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (!row_open) {
            row_open = true;
            row_line = line;
        }
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                    quote_closed = true;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
        } else if (quote_closed && c != ',' && c != '\r' && c != '\n') {
            throw FormatError(row_line, "content after closing quote");
        } else if (c == '"') {
            if (!field.empty())
                throw FormatError(row_line, "quote inside unquoted field");
            in_quotes = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            // swallowed; the \n that follows ends the row
        } else if (c == '\n') {
            ++line;
            end_row();
        } else {
            field.push_back(c);
        }
    }
    if (in_quotes) throw FormatError(row_line, "unterminated quoted field");
    if (row_open) end_row();
    return rows;
}

inline std::string escape(std::string_view field) {
    bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs_quotes) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline std::string write_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(fields[i]);
    }
    out.push_back('\n');
    return out;
}

}  // namespace detox::csv
