#pragma once

#include <filesystem>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace advkit {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Raised for any malformed input document. `path` is a dotted field path
// ("merges[3]", "prefix.user"); empty means the document root.
class DocumentError : public std::runtime_error {
 public:
  DocumentError(std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Parses JSON text; syntax errors become DocumentError with line/column.
json parse_json_text(std::string_view text);

// Throws DocumentError if `obj` has a key outside `allowed`.
void require_known_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                        const std::string& path);

std::string join_path(const std::string& parent, std::string_view key);
std::string index_path(const std::string& parent, std::size_t index);

// Line/column (1-based) of a byte offset in `text`.
std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte_offset);

}  // namespace advkit
