#include "agrav/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "agrav/errors.hpp"
#include "agrav/rng.hpp"

namespace agrav {

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::prelu: return "prelu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::linear: return "linear";
  }
  throw ValueError("unknown layer kind");
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "relu") return LayerKind::relu;
  if (s == "prelu") return LayerKind::prelu;
  if (s == "maxpool") return LayerKind::maxpool;
  if (s == "flatten") return LayerKind::flatten;
  if (s == "linear") return LayerKind::linear;
  throw ValueError("unknown layer kind '" + s + "'");
}

const char* tag_name(LayerTag t) {
  switch (t) {
    case LayerTag::plain: return "plain";
    case LayerTag::head: return "head";
    case LayerTag::tail: return "tail";
  }
  throw ValueError("unknown layer tag");
}

LayerTag tag_from_name(const std::string& s) {
  if (s == "plain") return LayerTag::plain;
  if (s == "head") return LayerTag::head;
  if (s == "tail") return LayerTag::tail;
  throw ValueError("unknown layer tag '" + s + "'");
}

// Walks the spec computing per-sample output shapes; shared by validate()
// and parameter allocation so the two can never disagree.
std::vector<Shape> walk_shapes(const ModelSpec& spec) {
  if (spec.input_shape.empty()) {
    throw ValueError("model '" + spec.name + "': input shape is empty");
  }
  for (Index d : spec.input_shape) {
    if (d <= 0) {
      throw ValueError("model '" + spec.name + "': nonpositive input dim");
    }
  }
  std::vector<Shape> out;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string at =
        "model '" + spec.name + "' layer " + std::to_string(i) + " (" +
        kind_name(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3) throw ValueError(at + ": needs C,H,W input");
        if (l.filters <= 0 || l.kernel <= 0) {
          throw ValueError(at + ": filters and kernel must be positive");
        }
        if (cur[1] < l.kernel || cur[2] < l.kernel) {
          throw ValueError(at + ": kernel larger than input " +
                           shape_to_string(cur));
        }
        cur = {l.filters, cur[1] - l.kernel + 1, cur[2] - l.kernel + 1};
        break;
      }
      case LayerKind::maxpool: {
        if (cur.size() != 3) throw ValueError(at + ": needs C,H,W input");
        if (cur[1] % 2 != 0 || cur[2] % 2 != 0) {
          throw ValueError(at + ": spatial dims must be even, got " +
                           shape_to_string(cur));
        }
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      }
      case LayerKind::flatten: {
        Index n = 1;
        for (Index d : cur) n *= d;
        cur = {n};
        break;
      }
      case LayerKind::linear: {
        if (cur.size() != 1) {
          throw ValueError(at + ": needs flat input, got " +
                           shape_to_string(cur));
        }
        if (l.in_features != cur[0]) {
          throw ValueError(at + ": in_features " +
                           std::to_string(l.in_features) +
                           " does not match incoming width " +
                           std::to_string(cur[0]));
        }
        if (l.out_features <= 0) {
          throw ValueError(at + ": out_features must be positive");
        }
        cur = {l.out_features};
        break;
      }
      case LayerKind::relu:
      case LayerKind::prelu:
        break;
    }
    out.push_back(cur);
  }
  return out;
}

}  // namespace

LayerSpec LayerSpec::conv(Index filters, Index kernel, LayerTag tag) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.tag = tag;
  l.filters = filters;
  l.kernel = kernel;
  return l;
}

LayerSpec LayerSpec::linear(Index in, Index out, LayerTag tag) {
  LayerSpec l;
  l.kind = LayerKind::linear;
  l.tag = tag;
  l.in_features = in;
  l.out_features = out;
  return l;
}

LayerSpec LayerSpec::activation(LayerKind kind) {
  LayerSpec l;
  l.kind = kind;
  return l;
}

void ModelSpec::validate() const {
  if (classes < 2) {
    throw ValueError("model '" + name + "': needs at least 2 classes");
  }
  if (layers.empty()) {
    throw ValueError("model '" + name + "': no layers");
  }
  walk_shapes(*this);
  Index head_at = -1, tail_at = -1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].tag == LayerTag::head) {
      if (head_at >= 0) throw ValueError("model '" + name + "': two head tags");
      head_at = static_cast<Index>(i);
    }
    if (layers[i].tag == LayerTag::tail) {
      if (tail_at >= 0) throw ValueError("model '" + name + "': two tail tags");
      tail_at = static_cast<Index>(i);
    }
  }
  if (head_at < 0) throw ValueError("model '" + name + "': missing head tag");
  if (tail_at < 0) throw ValueError("model '" + name + "': missing tail tag");
  if (head_at != static_cast<Index>(layers.size()) - 1 ||
      layers.back().kind != LayerKind::linear) {
    throw ValueError("model '" + name +
                     "': head must be the final linear layer");
  }
  if (layers.back().out_features != classes) {
    throw ValueError("model '" + name + "': final layer width " +
                     std::to_string(layers.back().out_features) +
                     " != class count " + std::to_string(classes));
  }
  if (tail_at >= head_at) {
    throw ValueError("model '" + name + "': tail must precede head");
  }
}

Index ModelSpec::tail_dim() const {
  const std::vector<Shape> shapes = walk_shapes(*this);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].tag == LayerTag::tail) {
      Index n = 1;
      for (Index d : shapes[i]) n *= d;
      return n;
    }
  }
  throw ValueError("model '" + name + "': missing tail tag");
}

Index ModelSpec::head_dim() const { return classes; }

void to_json(nlohmann::json& j, const LayerSpec& l) {
  j = nlohmann::json{{"kind", kind_name(l.kind)}, {"tag", tag_name(l.tag)}};
  if (l.kind == LayerKind::conv) {
    j["filters"] = l.filters;
    j["kernel"] = l.kernel;
  } else if (l.kind == LayerKind::linear) {
    j["in"] = l.in_features;
    j["out"] = l.out_features;
  }
}

void from_json(const nlohmann::json& j, LayerSpec& l) {
  l = LayerSpec{};
  l.kind = kind_from_name(j.at("kind").get<std::string>());
  l.tag = j.contains("tag") ? tag_from_name(j.at("tag").get<std::string>())
                            : LayerTag::plain;
  if (l.kind == LayerKind::conv) {
    l.filters = j.at("filters").get<Index>();
    l.kernel = j.at("kernel").get<Index>();
  } else if (l.kind == LayerKind::linear) {
    l.in_features = j.at("in").get<Index>();
    l.out_features = j.at("out").get<Index>();
  }
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"input_shape", s.input_shape},
                     {"classes", s.classes},
                     {"layers", s.layers}};
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
  s = ModelSpec{};
  s.name = j.at("name").get<std::string>();
  s.input_shape = j.at("input_shape").get<Shape>();
  s.classes = j.at("classes").get<Index>();
  s.layers = j.at("layers").get<std::vector<LayerSpec>>();
}

void Model::allocate_parameters() {
  const std::vector<Shape> shapes = walk_shapes(spec_);
  Shape cur = spec_.input_shape;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    first_param_.push_back(-1);
    switch (l.kind) {
      case LayerKind::conv: {
        first_param_.back() = static_cast<Index>(params_.size());
        params_.push_back(
            Tensor::zeros({l.filters, cur[0], l.kernel, l.kernel}, true));
        names_.push_back(prefix + "weight");
        params_.push_back(Tensor::zeros({l.filters}, true));
        names_.push_back(prefix + "bias");
        break;
      }
      case LayerKind::linear: {
        first_param_.back() = static_cast<Index>(params_.size());
        params_.push_back(
            Tensor::zeros({l.in_features, l.out_features}, true));
        names_.push_back(prefix + "weight");
        params_.push_back(Tensor::zeros({l.out_features}, true));
        names_.push_back(prefix + "bias");
        break;
      }
      case LayerKind::prelu: {
        first_param_.back() = static_cast<Index>(params_.size());
        params_.push_back(Tensor::zeros({1}, true));
        names_.push_back(prefix + "slope");
        break;
      }
      default:
        break;
    }
    cur = shapes[i];
  }
}

Model Model::build(ModelSpec spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = std::move(spec);
  m.allocate_parameters();
  Rng rng(seed, "init");
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    Tensor& p = m.params_[i];
    const std::string& n = m.names_[i];
    if (n.ends_with(".weight")) {
      Index fan_in = 1;
      for (std::size_t d = 1; d < p.rank(); ++d) fan_in *= p.dim(d);
      if (p.rank() == 2) fan_in = p.dim(0);  // linear stored [in, out]
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (Index k = 0; k < p.size(); ++k) {
        p.values()[k] = rng.uniform(-bound, bound);
      }
    } else if (n.ends_with(".slope")) {
      p.values()[0] = 0.25;
    }
    // biases stay zero
  }
  return m;
}

Tensor Model::forward(Tape& tape, const Tensor& x) const {
  return forward_with_latents(tape, x).logits;
}

Latents Model::forward_with_latents(Tape& tape, const Tensor& x) const {
  if (x.rank() != spec_.input_shape.size() + 1) {
    throw ShapeError("model '" + spec_.name + "': input " +
                     shape_to_string(x.shape()) +
                     " does not match per-sample shape " +
                     shape_to_string(spec_.input_shape) + " plus batch dim");
  }
  for (std::size_t d = 0; d < spec_.input_shape.size(); ++d) {
    if (x.dim(d + 1) != spec_.input_shape[d]) {
      throw ShapeError("model '" + spec_.name + "': input " +
                       shape_to_string(x.shape()) +
                       " does not match per-sample shape " +
                       shape_to_string(spec_.input_shape));
    }
  }
  Tensor cur = x;
  Latents out;
  bool have_tail = false;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const Index p0 = first_param_[i];
    switch (l.kind) {
      case LayerKind::conv:
        cur = conv2d(tape, cur, params_[p0], params_[p0 + 1]);
        break;
      case LayerKind::relu:
        cur = relu(tape, cur);
        break;
      case LayerKind::prelu:
        cur = prelu(tape, cur, params_[p0]);
        break;
      case LayerKind::maxpool:
        cur = maxpool2x2(tape, cur);
        break;
      case LayerKind::flatten:
        cur = flatten(tape, cur);
        break;
      case LayerKind::linear:
        cur = add(tape, matmul(tape, cur, params_[p0]), params_[p0 + 1]);
        break;
    }
    if (l.tag == LayerTag::tail) {
      out.tail = cur;
      have_tail = true;
    }
  }
  out.logits = cur;
  out.head = cur;  // validated specs put the head tag on the final layer
  if (!have_tail) {
    throw ValueError("model '" + spec_.name + "': no tail tag in layer list");
  }
  return out;
}

Model Model::clone() const {
  Model m;
  m.spec_ = spec_;
  m.names_ = names_;
  m.first_param_ = first_param_;
  m.params_.reserve(params_.size());
  for (const Tensor& p : params_) {
    Tensor copy = p.detached_copy();
    copy.set_requires_grad(true);
    m.params_.push_back(std::move(copy));
  }
  return m;
}

Index Model::parameter_count() const {
  Index n = 0;
  for (const Tensor& p : params_) n += p.size();
  return n;
}

void Model::zero_all_grads() {
  for (const Tensor& p : params_) {
    Tensor handle = p;
    handle.zero_grad();
  }
}

void Model::save(const std::filesystem::path& file) const {
  save_tensors(file, names_, params_);
}

Model Model::load(ModelSpec spec, const std::filesystem::path& file) {
  spec.validate();
  Model m;
  m.spec_ = std::move(spec);
  m.allocate_parameters();
  std::unordered_map<std::string, Tensor> loaded;
  for (auto& [name, tensor] : load_tensors(file)) {
    loaded.emplace(name, tensor);
  }
  if (loaded.size() != m.params_.size()) {
    throw IoError("checkpoint '" + file.string() + "' holds " +
                  std::to_string(loaded.size()) + " tensors, model '" +
                  m.spec_.name + "' expects " +
                  std::to_string(m.params_.size()));
  }
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    auto it = loaded.find(m.names_[i]);
    if (it == loaded.end()) {
      throw IoError("checkpoint '" + file.string() + "' missing tensor '" +
                    m.names_[i] + "'");
    }
    if (it->second.shape() != m.params_[i].shape()) {
      throw IoError("checkpoint tensor '" + m.names_[i] + "' has shape " +
                    shape_to_string(it->second.shape()) + ", expected " +
                    shape_to_string(m.params_[i].shape()));
    }
    m.params_[i].values() = it->second.values();
  }
  return m;
}

ModelSpec lenet_lite_spec(const Shape& input_shape, Index classes) {
  if (input_shape.size() != 3 || input_shape[1] != 28 || input_shape[2] != 28) {
    throw ValueError("lenet_lite_spec: input shape must be C,28,28, got " +
                     shape_to_string(input_shape));
  }
  ModelSpec s;
  s.name = "lenet-lite";
  s.input_shape = input_shape;
  s.classes = classes;
  s.layers = {
      LayerSpec::conv(6, 5),
      LayerSpec::activation(LayerKind::relu),
      LayerSpec::activation(LayerKind::maxpool),
      LayerSpec::conv(16, 5),
      LayerSpec::activation(LayerKind::prelu),
      LayerSpec::activation(LayerKind::maxpool),
      LayerSpec::activation(LayerKind::flatten),
      LayerSpec::linear(16 * 4 * 4, 120, LayerTag::tail),
      LayerSpec::linear(120, 84),
      LayerSpec::linear(84, classes, LayerTag::head),
  };
  s.validate();
  return s;
}

ModelSpec mlp_spec(Index input_dim, const std::vector<Index>& hidden_dims,
                   Index classes, std::string name) {
  if (hidden_dims.empty()) {
    throw ValueError("mlp_spec: hidden_dims must be nonempty");
  }
  if (input_dim <= 0) {
    throw ValueError("mlp_spec: input_dim must be positive");
  }
  ModelSpec s;
  s.name = std::move(name);
  s.input_shape = {input_dim};
  s.classes = classes;
  Index prev = input_dim;
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
    const bool last_hidden = i + 1 == hidden_dims.size();
    s.layers.push_back(LayerSpec::linear(
        prev, hidden_dims[i], last_hidden ? LayerTag::tail : LayerTag::plain));
    s.layers.push_back(LayerSpec::activation(LayerKind::relu));
    prev = hidden_dims[i];
  }
  s.layers.push_back(LayerSpec::linear(prev, classes, LayerTag::head));
  s.validate();
  return s;
}

Model build_lenet_lite(const Shape& input_shape, Index classes,
                       std::uint64_t seed) {
  return Model::build(lenet_lite_spec(input_shape, classes), seed);
}

Model build_mlp_blobs(Index input_dim, const std::vector<Index>& hidden_dims,
                      Index classes, std::uint64_t seed) {
  return Model::build(mlp_spec(input_dim, hidden_dims, classes), seed);
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is, const std::string& ctx) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw TruncatedFileError(ctx + ": unexpected end of file");
  }
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is, const std::string& ctx) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw TruncatedFileError(ctx + ": unexpected end of file");
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is, const std::string& ctx) {
  const std::uint64_t bits = get_u64(is, ctx);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

constexpr std::uint32_t kTensorArchiveVersion = 1;

}  // namespace

void save_tensors(const std::filesystem::path& file,
                  const std::vector<std::string>& names,
                  const std::vector<Tensor>& tensors) {
  if (names.size() != tensors.size()) {
    throw ValueError("save_tensors: name/tensor count mismatch");
  }
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + file.string() + "' for writing");
  os.write("AGRV", 4);
  put_u32(os, kTensorArchiveVersion);
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string& n = names[i];
    put_u32(os, static_cast<std::uint32_t>(n.size()));
    os.write(n.data(), static_cast<std::streamsize>(n.size()));
    const Tensor& t = tensors[i];
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) put_u64(os, static_cast<std::uint64_t>(d));
    for (Index k = 0; k < t.size(); ++k) put_f64(os, t.values()[k]);
  }
  if (!os) throw IoError("write failed for '" + file.string() + "'");
}

std::vector<std::pair<std::string, Tensor>> load_tensors(
    const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open '" + file.string() + "'");
  const std::string ctx = "tensor archive '" + file.string() + "'";
  char magic[4];
  if (!is.read(magic, 4)) throw TruncatedFileError(ctx + ": no header");
  if (std::memcmp(magic, "AGRV", 4) != 0) {
    throw BadMagicError(ctx + ": bad magic bytes");
  }
  const std::uint32_t version = get_u32(is, ctx);
  if (version != kTensorArchiveVersion) {
    throw IoError(ctx + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(is, ctx);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is, ctx);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw TruncatedFileError(ctx + ": truncated tensor name");
    }
    const std::uint32_t rank = get_u32(is, ctx);
    Shape shape(rank);
    Index total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<Index>(get_u64(is, ctx));
      total *= shape[d];
    }
    Eigen::ArrayXd data(total);
    for (Index k = 0; k < total; ++k) data[k] = get_f64(is, ctx);
    out.emplace_back(std::move(name),
                     Tensor::from_array(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace agrav
