#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace dfq {

/// Deterministic double formatting for CSV output.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

/// Write-to-temp-then-rename so readers never see partial files.
inline void write_text_atomic(const std::string& path, const std::string& payload) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + tmp);
    f << payload;
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("rename failed: " + path);
}

}  // namespace dfq
