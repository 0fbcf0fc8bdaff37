// src/serialize.cc

#include "joinss/serialize.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace joinss {

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(unsigned char v) { out_.put(static_cast<char>(v)); }
  void u64v(u64 v) {
    char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((v >> (8 * b)) & 0xff);
    out_.write(buf, 8);
  }
  void i64v(i64 v) { u64v(static_cast<u64>(v)); }
  void u128v(u128 v) {
    u64v(static_cast<u64>(v));
    u64v(static_cast<u64>(v >> 64));
  }
  void f64(double v) { u64v(std::bit_cast<u64>(v)); }
  void str(const std::string& s) {
    u64v(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void sizes(const std::vector<std::size_t>& v) {
    u64v(v.size());
    for (auto x : v) u64v(x);
  }
  void strings(const std::vector<std::string>& v) {
    u64v(v.size());
    for (const auto& s : v) str(s);
  }
  void counts(const std::vector<u128>& v) {
    u64v(v.size());
    for (auto x : v) u128v(x);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void raw(char* buf, std::size_t n) {
    in_.read(buf, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw ParseError("index file truncated");
  }
  unsigned char u8() {
    char c;
    raw(&c, 1);
    return static_cast<unsigned char>(c);
  }
  u64 u64v() {
    unsigned char buf[8];
    raw(reinterpret_cast<char*>(buf), 8);
    u64 v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | buf[b];
    return v;
  }
  i64 i64v() { return static_cast<i64>(u64v()); }
  u128 u128v() {
    const u64 lo = u64v();
    const u64 hi = u64v();
    return (static_cast<u128>(hi) << 64) | lo;
  }
  double f64() { return std::bit_cast<double>(u64v()); }
  // Lengths are bounded so a corrupt file cannot request absurd allocations.
  std::size_t length() {
    const u64 n = u64v();
    if (n > (u64{1} << 40)) throw ParseError("index file has an implausible array length");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    std::string s(length(), '\0');
    if (!s.empty()) raw(s.data(), s.size());
    return s;
  }
  std::vector<std::size_t> sizes() {
    std::vector<std::size_t> v(length());
    for (auto& x : v) x = static_cast<std::size_t>(u64v());
    return v;
  }
  std::vector<std::string> strings() {
    std::vector<std::string> v(length());
    for (auto& s : v) s = str();
    return v;
  }
  std::vector<u128> counts() {
    std::vector<u128> v(length());
    for (auto& x : v) x = u128v();
    return v;
  }

 private:
  std::istream& in_;
};

void write_tree(Writer& w, const JoinTree& t) {
  w.u64v(t.root);
  w.u64v(t.schemas.size());
  for (const auto& s : t.schemas) w.strings(s);
  w.sizes(t.parent);
  w.u64v(t.children.size());
  for (const auto& c : t.children) w.sizes(c);
  w.u64v(t.key.size());
  for (const auto& k : t.key) w.strings(k);
  w.sizes(t.preorder);
}

JoinTree read_tree(Reader& r) {
  JoinTree t;
  t.root = r.u64v();
  t.schemas.resize(r.length());
  for (auto& s : t.schemas) s = r.strings();
  t.parent = r.sizes();
  t.children.resize(r.length());
  for (auto& c : t.children) c = r.sizes();
  t.key.resize(r.length());
  for (auto& k : t.key) k = r.strings();
  t.preorder = r.sizes();
  const std::size_t k = t.schemas.size();
  if (t.root >= k || t.parent.size() != k || t.children.size() != k || t.key.size() != k || t.preorder.size() != k)
    throw ParseError("index file has an inconsistent join tree");
  for (const auto& c : t.children)
    for (auto x : c)
      if (x >= k) throw ParseError("index file has an inconsistent join tree");
  return t;
}

void write_relation(Writer& w, const Relation& rel) {
  w.str(rel.name());
  w.strings(rel.schema());
  w.u64v(rel.size());
  for (const auto& t : rel.tuples()) {
    for (const auto& v : t.values) {
      if (const auto* n = std::get_if<i64>(&v)) {
        w.u8(0);
        w.i64v(*n);
      } else {
        w.u8(1);
        w.str(std::get<std::string>(v));
      }
    }
    w.f64(t.weight);
    w.u64v(t.timestamp);
  }
}

Relation read_relation(Reader& r) {
  std::string name = r.str();
  std::vector<std::string> schema = r.strings();
  Relation rel(name, schema);
  const std::size_t n = r.length();
  for (std::size_t i = 0; i < n; ++i) {
    Tuple t;
    t.values.reserve(schema.size());
    for (std::size_t a = 0; a < schema.size(); ++a) {
      const unsigned char tag = r.u8();
      if (tag == 0) t.values.emplace_back(r.i64v());
      else if (tag == 1) t.values.emplace_back(r.str());
      else throw ParseError("index file has an unknown value tag");
    }
    t.weight = r.f64();
    t.timestamp = r.u64v();
    if (!rel.add(std::move(t))) throw ParseError("index file repeats a tuple of " + name);
  }
  return rel;
}

bool same_order(const Relation& a, const Relation& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t u = 0; u < a.size(); ++u)
    if (a.tuple(u).values != b.tuple(u).values || a.tuple(u).timestamp != b.tuple(u).timestamp) return false;
  return true;
}

}  // namespace

void serialize_index(const StaticIndex& idx, std::ostream& out) {
  const auto& d = idx.data();
  Writer w(out);
  out.write(kIndexMagic, 5);
  w.u8(static_cast<unsigned char>(d.kind));
  w.i64v(d.params.L);
  w.i64v(d.params.rho);
  w.u64v(d.params.n);
  w.u64v(d.result_cap);
  write_tree(w, d.query.tree());
  w.u64v(d.query.size());
  for (const auto& rel : d.query.relations()) write_relation(w, rel);
  w.u64v(d.phi.size());
  for (const auto& p : d.phi) {
    w.u64v(p.size());
    for (int x : p) w.i64v(x);
  }
  for (const auto* table : {&d.w, &d.m, &d.prefix}) {
    w.u64v(table->size());
    for (const auto& v : *table) w.counts(v);
  }
  w.counts(d.bucket_sizes);
  w.u128v(d.total);
  w.u128v(d.tail_size);
  if (!out) throw Error("failed writing index");
}

StaticIndex deserialize_index(std::istream& in) {
  Reader r(in);
  char magic[5];
  r.raw(magic, 5);
  if (std::memcmp(magic, kIndexMagic, 5) != 0) throw ParseError("not an index file (bad magic)");
  StaticIndex::Data d;
  const unsigned char kind = r.u8();
  if (kind > static_cast<unsigned char>(AggregatorKind::kSum)) throw ParseError("index file has an unknown aggregator");
  d.kind = static_cast<AggregatorKind>(kind);
  d.params.L = static_cast<int>(r.i64v());
  d.params.rho = static_cast<int>(r.i64v());
  d.params.n = r.u64v();
  d.result_cap = static_cast<std::size_t>(r.u64v());
  if (d.params.L < 1) throw ParseError("index file has an invalid L");
  JoinTree tree = read_tree(r);
  const std::size_t k = r.length();
  if (k != tree.size()) throw ParseError("index file has a relation count mismatch");
  std::vector<Relation> rels;
  rels.reserve(k);
  for (std::size_t i = 0; i < k; ++i) rels.push_back(read_relation(r));
  const std::vector<Relation> stored = rels;
  d.query = JoinQuery(std::move(tree), std::move(rels));
  for (std::size_t i = 0; i < k; ++i)
    if (!same_order(stored[i], d.query.relation(i))) throw ParseError("index file relation order is not canonical");
  d.phi.resize(r.length());
  for (auto& p : d.phi) {
    p.resize(r.length());
    for (int& x : p) x = static_cast<int>(r.i64v());
  }
  for (auto* table : {&d.w, &d.m, &d.prefix}) {
    table->resize(r.length());
    for (auto& v : *table) v = r.counts();
  }
  d.bucket_sizes = r.counts();
  d.total = r.u128v();
  d.tail_size = r.u128v();

  const std::size_t H = static_cast<std::size_t>(d.params.L) + 1;
  bool ok = d.phi.size() == k && d.w.size() == k && d.m.size() == k &&
            (d.prefix.empty() || d.prefix.size() == k) && d.bucket_sizes.size() == H - 1;
  for (std::size_t i = 0; ok && i < k; ++i) {
    const std::size_t n = d.query.relation(i).size();
    const std::size_t slots = std::max<std::size_t>(1, d.query.tree().children[i].size());
    const std::size_t groups = i == d.query.tree().root ? 0 : d.query.relation(i).group_count();
    ok = d.phi[i].size() == n && d.w[i].size() == n * slots * H && d.m[i].size() == groups * H &&
         (d.prefix.empty() || d.prefix[i].size() == n * H);
  }
  if (!ok) throw ParseError("index file has inconsistent table sizes");
  return StaticIndex(std::move(d));
}

void save_index(const StaticIndex& idx, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  serialize_index(idx, out);
}

StaticIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return deserialize_index(in);
}

}  // namespace joinss
