#include "rehabxai/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

namespace rehabxai {

std::string_view to_string(Component c) { return c == Component::kRom ? "ROM" : "COMP"; }
std::string_view to_string(Label l) { return l == Label::kCorrect ? "correct" : "impaired"; }
std::string_view to_string(Side s) { return s == Side::kAffected ? "affected" : "unaffected"; }
std::string_view to_string(Laterality l) { return l == Laterality::kLeft ? "left" : "right"; }

Component parse_component(std::string_view s) {
  if (s == "ROM") return Component::kRom;
  if (s == "COMP") return Component::kComp;
  throw ParseError("unknown component '" + std::string(s) + "' (expected ROM or COMP)");
}

Label parse_label(std::string_view s) {
  if (s == "correct") return Label::kCorrect;
  if (s == "impaired") return Label::kImpaired;
  throw ParseError("unknown label '" + std::string(s) + "' (expected correct or impaired)");
}

Side parse_side(std::string_view s) {
  if (s == "affected") return Side::kAffected;
  if (s == "unaffected") return Side::kUnaffected;
  throw ParseError("unknown side '" + std::string(s) + "'");
}

Laterality parse_laterality(std::string_view s) {
  if (s == "left") return Laterality::kLeft;
  if (s == "right") return Laterality::kRight;
  throw ParseError("unknown laterality '" + std::string(s) + "'");
}

double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  static std::atomic<unsigned> counter{0};
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into '" + path.string() + "'");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rehabxai
