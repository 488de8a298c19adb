#pragma once

#include <string>
#include <string_view>

namespace trajdiff {

// Lowercase hex SHA-1 of raw bytes.
std::string sha1_hex(std::string_view bytes);
// Same digest `git hash-object` gives for a blob with this content.
std::string git_blob_hash(std::string_view content);
// SHA-1 of a file's bytes; throws IoError when unreadable.
std::string file_sha1(const std::string& path);

}  // namespace trajdiff
