#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lagstokes/mesh.hpp"

namespace lagstokes {

// Shortest text that reads back to the same double (17 significant digits).
std::string format_double(double v);
double parse_double(const std::string& s);

// LAGSTOKES-MESH v1:
//   LAGSTOKES-MESH v1
//   nodes <n>            then n lines "x y"
//   cells <m>            then m lines "a b c plus|minus"
//   facets <f>           then f lines "a b interface|outer cell_plus cell_minus cell"
//   end
// Facets are derived on read and must match the stored block.
void write_mesh(std::ostream& os, const RefMesh& mesh);
RefMesh read_mesh(std::istream& is);
void save_mesh(const std::string& path, const RefMesh& mesh);
RefMesh load_mesh(const std::string& path);
// FNV-1a over the canonical mesh text.
std::uint64_t mesh_hash(const RefMesh& mesh);
std::string hash_hex(std::uint64_t h);

struct SnapshotBlock {
  std::string name;
  int ncomp = 1;
  Vector values;
};

// LAGSTOKES-FIELD v1:
//   LAGSTOKES-FIELD v1
//   time <t>
//   mesh_hash <16 hex digits>
//   blocks <k>
//   block <name> <ncomp> <count>   then count lines, one value each
//   end
struct Snapshot {
  double time = 0.0;
  std::uint64_t mesh_hash = 0;
  std::vector<SnapshotBlock> blocks;
  const SnapshotBlock& block(const std::string& name) const;
};
void write_snapshot(std::ostream& os, const Snapshot& s);
Snapshot read_snapshot(std::istream& is);
void save_snapshot(const std::string& path, const Snapshot& s);
Snapshot load_snapshot(const std::string& path);

// Minimal CSV with a fixed header; doubles use format_double.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row();
  CsvTable& add(double v);
  CsvTable& add(long long v);
  CsvTable& add(int v) { return add(static_cast<long long>(v)); }
  CsvTable& add(const std::string& v);
  void write(std::ostream& os) const;
  void save(const std::string& path) const;
  size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace lagstokes
