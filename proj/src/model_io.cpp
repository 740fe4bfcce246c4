#include "gbf/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gbf/error.hpp"

namespace gbf {
namespace {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

constexpr char kMagic[3] = {'G', 'B', 'F'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf_.append(raw, sizeof(T));
  }
  void u8(std::uint8_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void i32(std::int32_t v) { put(v); }
  void f64(double v) { put(v); }
  void str(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void bytes(const std::uint8_t* p, std::size_t n) { buf_.append(reinterpret_cast<const char*>(p), n); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  double f64() { return get<double>(); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view take(std::uint64_t n) {
    need(n);
    const auto v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  // Element count read from the file, checked against what could remain.
  std::uint64_t count(std::size_t min_element_size) {
    const std::uint64_t n = u64();
    if (min_element_size > 0 && n > remaining() / min_element_size) throw Error("model file: corrupt count");
    return n;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) throw Error("model file: truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

void section(Writer& out, const char (&tag)[5], Writer& body) {
  out.bytes(reinterpret_cast<const std::uint8_t*>(tag), 4);
  out.u64(body.buffer().size());
  out.buffer() += body.buffer();
}

Writer params_section(const GbfParams& p) {
  Writer w;
  w.u8(static_cast<std::uint8_t>(p.family));
  w.u64(p.stages);
  w.u8(static_cast<std::uint8_t>(p.variance_mode));
  w.u8(static_cast<std::uint8_t>(p.residual_source));
  w.u64(p.forest.num_trees);
  w.f64(p.forest.sample_fraction);
  w.u64(p.forest.seed);
  w.u64(p.forest.tree.mtry);
  w.u64(p.forest.tree.min_node_size);
  w.u8(p.forest.tree.max_depth.has_value());
  w.u64(p.forest.tree.max_depth.value_or(0));
  w.u64(p.forest.tree.seed);
  return w;
}

GbfParams read_params(Reader& r) {
  GbfParams p;
  const auto family = r.u8();
  if (family > 2) throw Error("model file: bad family");
  p.family = static_cast<Family>(family);
  p.stages = r.u64();
  const auto mode = r.u8();
  const auto source = r.u8();
  if (mode > 1 || source > 1) throw Error("model file: bad enum value");
  p.variance_mode = static_cast<VarianceMode>(mode);
  p.residual_source = static_cast<ResidualSource>(source);
  p.forest.num_trees = r.u64();
  p.forest.sample_fraction = r.f64();
  p.forest.seed = r.u64();
  p.forest.tree.mtry = r.u64();
  p.forest.tree.min_node_size = r.u64();
  const bool has_depth = r.u8() != 0;
  const std::uint64_t depth = r.u64();
  if (has_depth) p.forest.tree.max_depth = depth;
  p.forest.tree.seed = r.u64();
  return p;
}

Writer forest_section(const ForestModel& f) {
  Writer w;
  w.u64(f.num_trees());
  w.u64(f.n());
  for (const Tree& tree : f.trees()) {
    w.u64(tree.nodes().size());
    for (const TreeNode& node : tree.nodes()) {
      w.i32(node.feature);
      w.f64(node.threshold);
      w.i32(node.left);
      w.i32(node.right);
      w.f64(node.value);
      w.i32(node.leaf_id);
    }
  }
  w.bytes(f.inclusion_matrix().data(), f.inclusion_matrix().size());
  return w;
}

ForestModel read_forest(Reader& r) {
  const std::uint64_t B = r.count(8);
  const std::uint64_t n = r.u64();
  std::vector<Tree> trees;
  trees.reserve(B);
  for (std::uint64_t b = 0; b < B; ++b) {
    std::vector<TreeNode> nodes(r.count(32));
    for (TreeNode& node : nodes) {
      node.feature = r.i32();
      node.threshold = r.f64();
      node.left = r.i32();
      node.right = r.i32();
      node.value = r.f64();
      node.leaf_id = r.i32();
    }
    trees.emplace_back(std::move(nodes));
  }
  if (n > 0 && B > r.remaining() / n) throw Error("model file: truncated inclusion matrix");
  const std::string_view N = r.take(B * n);
  std::vector<std::vector<std::uint32_t>> inbag(B);
  for (std::uint64_t b = 0; b < B; ++b) {
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::uint8_t>(N[b * n + i]);
      if (v > 1) throw Error("model file: inclusion entries must be 0 or 1");
      if (v) inbag[b].push_back(static_cast<std::uint32_t>(i));
    }
  }
  return ForestModel(std::move(trees), std::move(inbag), n);
}

}  // namespace

std::string serialize_model(const ModelFile& file) {
  const GbfModel& m = file.model;
  Writer out;
  out.u8(kModelFormatVersion);
  out.bytes(reinterpret_cast<const std::uint8_t*>(kMagic), 3);

  Writer params = params_section(m.params);
  section(out, "PARM", params);

  Writer constant;
  constant.u64(m.n);
  constant.u64(m.p);
  constant.f64(m.eta0);
  for (const double u : m.u0) constant.f64(u);
  section(out, "CNST", constant);

  for (const ForestModel& f : m.forests) {
    Writer forest = forest_section(f);
    section(out, "FRST", forest);
  }

  Writer ranges;
  ranges.u64(m.stage_input_range.size());
  for (const auto& r : m.stage_input_range) {
    ranges.f64(r.lo);
    ranges.f64(r.hi);
  }
  section(out, "RNGE", ranges);

  Writer ll;
  ll.u64(m.training_mean_ll.size());
  for (const double v : m.training_mean_ll) ll.f64(v);
  section(out, "TRLL", ll);

  Writer enc;
  enc.u64(file.encoding.columns.size());
  for (const auto& c : file.encoding.columns) {
    enc.str(c.name);
    enc.u64(c.levels.size());
    for (const auto& level : c.levels) enc.str(level);
  }
  section(out, "ENCD", enc);

  Writer fp;
  fp.u64(m.fingerprint);
  section(out, "FPRT", fp);

  Writer end;
  section(out, "END ", end);
  return std::move(out.buffer());
}

ModelFile deserialize_model(const std::string& bytes) {
  Reader in(bytes);
  const std::uint8_t version = in.u8();
  if (version != kModelFormatVersion) {
    throw Error("model file: unsupported format version " + std::to_string(version));
  }
  if (in.take(3) != std::string_view(kMagic, 3)) throw Error("model file: bad magic");

  ModelFile file;
  GbfModel& m = file.model;
  bool seen_params = false, seen_constant = false, seen_end = false;
  while (!in.done()) {
    const std::string tag(in.take(4));
    const std::uint64_t length = in.u64();
    Reader body(in.take(length));
    if (tag == "PARM") {
      m.params = read_params(body);
      seen_params = true;
    } else if (tag == "CNST") {
      m.n = body.u64();
      m.p = body.u64();
      m.eta0 = body.f64();
      if (m.n > body.remaining() / 8) throw Error("model file: truncated constant section");
      m.u0.resize(m.n);
      for (double& u : m.u0) u = body.f64();
      seen_constant = true;
    } else if (tag == "FRST") {
      m.forests.push_back(read_forest(body));
    } else if (tag == "RNGE") {
      m.stage_input_range.resize(body.count(16));
      for (auto& r : m.stage_input_range) {
        r.lo = body.f64();
        r.hi = body.f64();
      }
    } else if (tag == "TRLL") {
      m.training_mean_ll.resize(body.count(8));
      for (double& v : m.training_mean_ll) v = body.f64();
    } else if (tag == "ENCD") {
      file.encoding.columns.resize(body.count(16));
      for (auto& c : file.encoding.columns) {
        c.name = body.str();
        c.levels.resize(body.count(8));
        for (auto& level : c.levels) level = body.str();
      }
    } else if (tag == "FPRT") {
      m.fingerprint = body.u64();
    } else if (tag == "END ") {
      seen_end = true;
      break;
    }
    // Unknown sections are skipped.
  }
  if (!seen_params || !seen_constant || !seen_end) throw Error("model file: missing required section");
  if (m.forests.size() != m.params.stages || m.stage_input_range.size() != m.params.stages) {
    throw Error("model file: stage count does not match the forest sections");
  }
  for (const auto& f : m.forests) {
    if (f.n() != m.n) throw Error("model file: forest trained on a different n");
  }
  if (!file.encoding.columns.empty() && file.encoding.width() != m.p) {
    throw Error("model file: feature encoding width does not match p");
  }
  return file;
}

void save_model(const std::filesystem::path& path, const ModelFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = serialize_model(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_model(buffer.str());
}

}  // namespace gbf
