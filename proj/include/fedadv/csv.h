/*
 * Copyright 2026 The fedadv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FEDADV_CSV_H_
#define FEDADV_CSV_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fedadv {

using CsvRow = std::vector<std::string>;

// 17 significant digits, so every double reloads exactly. NaN prints as
// "nan".
std::string FormatDouble(double value);

// RFC 4180 field quoting: fields containing a comma, quote, CR or LF are
// wrapped in quotes with embedded quotes doubled.
std::string QuoteCsvField(std::string_view field);
std::string FormatCsvRow(const CsvRow& row);

// Writes header + rows, one "\n"-terminated line each.
void WriteCsv(const std::filesystem::path& path, const CsvRow& header,
              const std::vector<CsvRow>& rows);

// Parses RFC 4180 text, including quoted fields spanning lines.
std::vector<CsvRow> ParseCsv(std::string_view text);
std::vector<CsvRow> ReadCsv(const std::filesystem::path& path);

}  // namespace fedadv

#endif  // FEDADV_CSV_H_
