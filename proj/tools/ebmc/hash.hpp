#pragma once

#include <string>
#include <string_view>

namespace ebmc::cli {

/// Lowercase hex SHA-1 of `data`.
std::string sha1_hex(std::string_view data);

/// Git blob id of `content`: SHA-1 of "blob <size>\0<content>".
std::string git_blob_hash(std::string_view content);

}  // namespace ebmc::cli
