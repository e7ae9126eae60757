#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rehabxai {

// Error hierarchy. Callers that need to map failures onto exit codes or HTTP
// statuses catch these by type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Raised by operations whose ordering rules were violated (duplicate records,
// out-of-order phases). Maps to HTTP 409.
class ConflictError : public Error {
 public:
  using Error::Error;
};

// Execution policy for kernels that have both a serial reference and an
// OpenMP path. Both produce bit-identical results.
enum class Exec { kSerial, kParallel };

enum class Component { kRom, kComp };
enum class Label { kCorrect, kImpaired };
enum class Side { kAffected, kUnaffected };
enum class Laterality { kLeft, kRight };

std::string_view to_string(Component c);
std::string_view to_string(Label l);
std::string_view to_string(Side s);
std::string_view to_string(Laterality l);

Component parse_component(std::string_view s);
Label parse_label(std::string_view s);
Side parse_side(std::string_view s);
Laterality parse_laterality(std::string_view s);

inline int class_index(Label l) { return l == Label::kCorrect ? 0 : 1; }
inline Label label_from_index(int i) { return i == 0 ? Label::kCorrect : Label::kImpaired; }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

double dot(Vec3 a, Vec3 b);
double norm(Vec3 a);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Writes to a sibling temp file and renames over the target so readers never
// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace rehabxai
