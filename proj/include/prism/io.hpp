#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>

#include "prism/error.hpp"

namespace prism {

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open '" + tmp + "' for writing");
    out << content;
    out.flush();
    if (!out) throw InputError("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace prism
