#include "lagstokes/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lagstokes/core.hpp"

namespace lagstokes {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  const char* b = s.c_str();
  char* e = nullptr;
  errno = 0;
  const double v = std::strtod(b, &e);
  if (e == b || *e != '\0' || errno == ERANGE)
    throw Error(ErrorKind::io, "not a number: '" + s + "'");
  return v;
}

namespace {

const char* kMeshHeader = "LAGSTOKES-MESH v1";
const char* kFieldHeader = "LAGSTOKES-FIELD v1";

struct LineReader {
  std::istream& is;
  int line = 0;
  std::string next() {
    std::string s;
    if (!std::getline(is, s)) fail("unexpected end of file");
    ++line;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::io, "line " + std::to_string(line) + ": " + msg);
  }
  std::vector<std::string> tokens() {
    std::istringstream ss(next());
    std::vector<std::string> t;
    for (std::string w; ss >> w;) t.push_back(w);
    return t;
  }
  long count(const std::string& key) {
    const auto t = tokens();
    if (t.size() != 2 || t[0] != key) fail("expected '" + key + " <count>'");
    return to_long(t[1]);
  }
  long to_long(const std::string& s) const {
    char* e = nullptr;
    const long v = std::strtol(s.c_str(), &e, 10);
    if (e == s.c_str() || *e != '\0' || v < 0) fail("bad integer '" + s + "'");
    return v;
  }
  double to_double(const std::string& s) const {
    try {
      return parse_double(s);
    } catch (const Error&) {
      fail("bad number '" + s + "'");
    }
  }
};

}  // namespace

void write_mesh(std::ostream& os, const RefMesh& mesh) {
  os << kMeshHeader << '\n';
  os << "nodes " << mesh.num_nodes() << '\n';
  for (const Vec2& x : mesh.nodes) os << format_double(x.x()) << ' ' << format_double(x.y()) << '\n';
  os << "cells " << mesh.num_cells() << '\n';
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& t = mesh.cells[c];
    os << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << (mesh.phase[c] == Phase::plus ? "plus" : "minus") << '\n';
  }
  os << "facets " << mesh.num_facets() << '\n';
  for (const Facet& f : mesh.facets)
    os << f.nodes[0] << ' ' << f.nodes[1] << ' ' << (f.kind == FacetKind::interface ? "interface" : "outer")
       << ' ' << f.cell_plus << ' ' << f.cell_minus << ' ' << f.cell << '\n';
  os << "end\n";
}

RefMesh read_mesh(std::istream& is) {
  LineReader r{is};
  if (r.next() != kMeshHeader) r.fail("missing LAGSTOKES-MESH v1 header");
  RefMesh m;
  const long nn = r.count("nodes");
  for (long i = 0; i < nn; ++i) {
    const auto t = r.tokens();
    if (t.size() != 2) r.fail("node line needs two coordinates");
    m.nodes.emplace_back(r.to_double(t[0]), r.to_double(t[1]));
  }
  const long nc = r.count("cells");
  for (long i = 0; i < nc; ++i) {
    const auto t = r.tokens();
    if (t.size() != 4) r.fail("cell line needs three nodes and a phase");
    std::array<int, 3> c;
    for (int k = 0; k < 3; ++k) {
      const long v = r.to_long(t[k]);
      if (v >= nn) r.fail("cell references missing node " + t[k]);
      c[k] = static_cast<int>(v);
    }
    m.cells.push_back(c);
    if (t[3] == "plus") m.phase.push_back(Phase::plus);
    else if (t[3] == "minus") m.phase.push_back(Phase::minus);
    else r.fail("phase must be plus or minus");
  }
  const long nf = r.count("facets");
  std::vector<std::array<std::string, 6>> stored;
  for (long i = 0; i < nf; ++i) {
    const auto t = r.tokens();
    if (t.size() != 6) r.fail("facet line needs six fields");
    stored.push_back({t[0], t[1], t[2], t[3], t[4], t[5]});
  }
  if (r.next() != "end") r.fail("missing end marker");
  try {
    m.finalize();
  } catch (const Error& e) {
    throw Error(ErrorKind::io, std::string("mesh fails its invariants: ") + e.what());
  }
  if (static_cast<long>(m.facets.size()) != nf) throw Error(ErrorKind::io, "facet block does not match the cells");
  for (long i = 0; i < nf; ++i) {
    const Facet& f = m.facets[i];
    const std::array<std::string, 6> derived = {
        std::to_string(f.nodes[0]), std::to_string(f.nodes[1]),
        f.kind == FacetKind::interface ? "interface" : "outer", std::to_string(f.cell_plus),
        std::to_string(f.cell_minus), std::to_string(f.cell)};
    if (derived != stored[i]) throw Error(ErrorKind::io, "facet " + std::to_string(i) + " does not match the cells");
  }
  return m;
}

void save_mesh(const std::string& path, const RefMesh& mesh) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::io, "cannot write " + path);
  write_mesh(os, mesh);
}

RefMesh load_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::io, "cannot read " + path);
  return read_mesh(is);
}

std::uint64_t mesh_hash(const RefMesh& mesh) {
  std::ostringstream os;
  write_mesh(os, mesh);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

const SnapshotBlock& Snapshot::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw Error(ErrorKind::lookup, "snapshot has no block '" + name + "'");
}

void write_snapshot(std::ostream& os, const Snapshot& s) {
  os << kFieldHeader << '\n';
  os << "time " << format_double(s.time) << '\n';
  os << "mesh_hash " << hash_hex(s.mesh_hash) << '\n';
  os << "blocks " << s.blocks.size() << '\n';
  for (const auto& b : s.blocks) {
    if (b.name.empty() || b.name.find_first_of(" \t\n") != std::string::npos)
      throw Error(ErrorKind::io, "block names must be single words");
    os << "block " << b.name << ' ' << b.ncomp << ' ' << b.values.size() << '\n';
    for (int i = 0; i < b.values.size(); ++i) os << format_double(b.values[i]) << '\n';
  }
  os << "end\n";
}

Snapshot read_snapshot(std::istream& is) {
  LineReader r{is};
  if (r.next() != kFieldHeader) r.fail("missing LAGSTOKES-FIELD v1 header");
  Snapshot s;
  auto t = r.tokens();
  if (t.size() != 2 || t[0] != "time") r.fail("expected 'time <t>'");
  s.time = r.to_double(t[1]);
  t = r.tokens();
  if (t.size() != 2 || t[0] != "mesh_hash" || t[1].size() != 16) r.fail("expected 'mesh_hash <hex>'");
  char* e = nullptr;
  s.mesh_hash = std::strtoull(t[1].c_str(), &e, 16);
  if (*e != '\0') r.fail("bad mesh hash");
  const long nb = r.count("blocks");
  for (long k = 0; k < nb; ++k) {
    t = r.tokens();
    if (t.size() != 4 || t[0] != "block") r.fail("expected 'block <name> <ncomp> <count>'");
    SnapshotBlock b;
    b.name = t[1];
    b.ncomp = static_cast<int>(r.to_long(t[2]));
    const long n = r.to_long(t[3]);
    if (b.ncomp < 1 || n % b.ncomp != 0) r.fail("block size is not a multiple of its components");
    b.values.resize(n);
    for (long i = 0; i < n; ++i) b.values[i] = r.to_double(r.next());
    s.blocks.push_back(std::move(b));
  }
  if (r.next() != "end") r.fail("missing end marker");
  return s;
}

void save_snapshot(const std::string& path, const Snapshot& s) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::io, "cannot write " + path);
  write_snapshot(os, s);
}

Snapshot load_snapshot(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::io, "cannot read " + path);
  return read_snapshot(is);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row() {
  if (!rows_.empty() && rows_.back().size() != header_.size())
    throw Error(ErrorKind::shape, "CSV row has the wrong number of columns");
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(double v) {
  rows_.back().push_back(format_double(v));
  return *this;
}

CsvTable& CsvTable::add(long long v) {
  rows_.back().push_back(std::to_string(v));
  return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
  if (v.find_first_of(",\"\n") != std::string::npos) {
    std::string q = "\"";
    for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    rows_.back().push_back(q + "\"");
  } else {
    rows_.back().push_back(v);
  }
  return *this;
}

void CsvTable::write(std::ostream& os) const {
  for (size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
  os << '\n';
  for (const auto& r : rows_) {
    if (r.size() != header_.size()) throw Error(ErrorKind::shape, "CSV row has the wrong number of columns");
    for (size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
}

void CsvTable::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::io, "cannot write " + path);
  write(os);
}

}  // namespace lagstokes
