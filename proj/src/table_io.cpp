#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "coed/errors.hpp"
#include "coed/linalg.hpp"
#include "coed/model.hpp"

namespace coed {

namespace {

// FNV-1a over the raw bytes of the coordinate doubles; exact-equality
// duplicate detection wants bit patterns, not values
std::uint64_t coord_hash(const double* p, int n) {
  std::uint64_t h = 1469598103934665603ULL;
  const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(n); ++i)
    h = (h ^ bytes[i]) * 1099511628211ULL;
  return h;
}

void split_csv(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double(const std::string& field, long line_no) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e)
    throw ParseError(line_no, "expected a number, got '" + field + "'");
  return v;
}

long parse_count(const std::string& field, long line_no) {
  long v = 0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || v < 0)
    throw ParseError(line_no, "expected a non-negative count, got '" + field + "'");
  return v;
}

}  // namespace

void save_space(const CandidateSpace& space, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing: " +
                        std::strerror(errno));
  std::string line;
  char buf[40];
  line += std::to_string(space.dim_x());
  line += ',';
  line += std::to_string(space.d_theta());
  line += ',';
  line += std::to_string(space.scalar_names().size());
  for (const std::string& name : space.scalar_names()) {
    line += ',';
    line += name;
  }
  line += '\n';

  const int nsc = static_cast<int>(space.scalar_names().size());
  const std::size_t pk = space.packed_dim();
  for (std::size_t i = 0; i < space.size(); ++i) {
    auto x = space.point(i);
    for (int d = 0; d < space.dim_x(); ++d) {
      std::snprintf(buf, sizeof buf, d == 0 ? "%.17g" : ",%.17g", x[d]);
      line += buf;
    }
    const double* m = space.info_ptr(i);
    for (std::size_t j = 0; j < pk; ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", m[j]);
      line += buf;
    }
    for (int c = 0; c < nsc; ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", space.scalar(i, c));
      line += buf;
    }
    line += '\n';
    if (line.size() > (1u << 16) || i + 1 == space.size()) {
      if (std::fwrite(line.data(), 1, line.size(), f) != line.size()) {
        std::fclose(f);
        throw IoError("short write to '" + path + "'");
      }
      line.clear();
    }
  }
  if (!line.empty() &&
      std::fwrite(line.data(), 1, line.size(), f) != line.size()) {
    std::fclose(f);
    throw IoError("short write to '" + path + "'");
  }
  if (std::fclose(f) != 0) throw IoError("close failed for '" + path + "'");
}

CandidateSpace load_tabulated_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  std::string line;
  std::vector<std::string> fields;
  if (!std::getline(in, line))
    throw ParseError(1, "missing header row");
  split_csv(line, fields);
  if (fields.size() < 3)
    throw ParseError(1, "header needs dim_x,d_theta,n_scalars");
  const long dim_x = parse_count(fields[0], 1);
  const long d_theta = parse_count(fields[1], 1);
  const long n_scalars = parse_count(fields[2], 1);
  if (dim_x < 1 || d_theta < 1)
    throw ParseError(1, "dim_x and d_theta must be at least 1");
  if (static_cast<long>(fields.size()) != 3 + n_scalars)
    throw ParseError(1, "header names " + std::to_string(fields.size() - 3) +
                            " scalar channels, declared " +
                            std::to_string(n_scalars));

  CandidateSpace sp;
  sp.dim_x_ = static_cast<int>(dim_x);
  sp.d_theta_ = static_cast<int>(d_theta);
  for (long c = 0; c < n_scalars; ++c) {
    const std::string& name = fields[3 + c];
    if (name.empty()) throw ParseError(1, "empty scalar channel name");
    if (sp.channel(name) >= 0)
      throw ParseError(1, "duplicate scalar channel '" + name + "'");
    sp.scalar_names_.push_back(name);
  }

  const std::size_t pk = SymMatrix::packed_size(sp.d_theta_);
  const std::size_t row_fields =
      static_cast<std::size_t>(dim_x) + pk + static_cast<std::size_t>(n_scalars);
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> seen;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.peek() == std::ifstream::traits_type::eof()) break;
    split_csv(line, fields);
    if (fields.size() != row_fields)
      throw ParseError(line_no, "expected " + std::to_string(row_fields) +
                                    " fields, got " +
                                    std::to_string(fields.size()));
    const std::size_t idx = sp.n_;
    for (long d = 0; d < dim_x; ++d)
      sp.coords_.push_back(parse_double(fields[d], line_no));
    for (std::size_t j = 0; j < pk; ++j)
      sp.info_.push_back(parse_double(fields[dim_x + j], line_no));
    for (long c = 0; c < n_scalars; ++c)
      sp.scalars_.push_back(parse_double(fields[dim_x + pk + c], line_no));
    ++sp.n_;

    const double* coords = sp.coords_.data() + idx * dim_x;
    auto& bucket = seen[coord_hash(coords, sp.dim_x_)];
    for (std::size_t prev : bucket) {
      const double* other = sp.coords_.data() + prev * dim_x;
      if (std::memcmp(coords, other, sizeof(double) * dim_x) == 0)
        throw DuplicatePoint(static_cast<long>(idx));
    }
    bucket.push_back(idx);

    if (!is_psd(sp.info(idx))) throw NonPsdRow(static_cast<long>(idx));
  }
  if (in.bad()) throw IoError("read failed for '" + path + "'");
  if (sp.n_ == 0) throw ParseError(line_no, "table has no data rows");
  return sp;
}

}  // namespace coed
