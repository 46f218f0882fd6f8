#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agrav/ops.hpp"
#include "agrav/tensor.hpp"

namespace agrav {

enum class LayerKind { conv, relu, prelu, maxpool, flatten, linear };

/// Marks which layer activations the centroid machinery reads. Exactly one
/// head (the final pre-softmax layer) and one tail (an earlier layer) per
/// model.
enum class LayerTag { plain, head, tail };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  LayerTag tag = LayerTag::plain;
  Index filters = 0;       // conv only
  Index kernel = 0;        // conv only (square kernels)
  Index in_features = 0;   // linear only
  Index out_features = 0;  // linear only

  static LayerSpec conv(Index filters, Index kernel,
                        LayerTag tag = LayerTag::plain);
  static LayerSpec linear(Index in, Index out, LayerTag tag = LayerTag::plain);
  static LayerSpec activation(LayerKind kind);

  bool operator==(const LayerSpec&) const = default;
};

/// Declarative network description. input_shape is per sample (no batch
/// dim): {C,H,W} for conv nets, {D} for MLPs.
struct ModelSpec {
  std::string name;
  Shape input_shape;
  Index classes = 0;
  std::vector<LayerSpec> layers;

  /// Walks the layer list checking shape compatibility, that the final
  /// layer is the unique head with out_features == classes, and that a
  /// unique tail precedes it. Throws ValueError on violation.
  void validate() const;

  /// Output width of the tail / head layers (head width == classes).
  Index tail_dim() const;
  Index head_dim() const;

  bool operator==(const ModelSpec&) const = default;
};

void to_json(nlohmann::json& j, const LayerSpec& l);
void from_json(const nlohmann::json& j, LayerSpec& l);
void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

/// Logits plus the activations captured at the tagged layers. head equals
/// logits whenever the head tag sits on the final layer (always true for
/// validated specs).
struct Latents {
  Tensor logits;
  Tensor head;
  Tensor tail;
};

class Model {
 public:
  /// Builds with Kaiming-uniform weights drawn from the "init" stream of
  /// the given seed; biases start at zero, prelu slopes at 0.25.
  static Model build(ModelSpec spec, std::uint64_t seed);

  /// Reads parameters saved by save() into a freshly built model. Errors if
  /// names, ranks, or dims disagree with the spec's parameter set.
  static Model load(ModelSpec spec, const std::filesystem::path& file);

  Tensor forward(Tape& tape, const Tensor& x) const;
  Latents forward_with_latents(Tape& tape, const Tensor& x) const;

  /// Parameter-identical copy with independent storage.
  Model clone() const;

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  Index parameter_count() const;
  void zero_all_grads();

  void save(const std::filesystem::path& file) const;

 private:
  Model() = default;
  void allocate_parameters();

  ModelSpec spec_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  // index into params_ of each layer's first parameter, -1 if none
  std::vector<Index> first_param_;
};

ModelSpec lenet_lite_spec(const Shape& input_shape, Index classes);
ModelSpec mlp_spec(Index input_dim, const std::vector<Index>& hidden_dims,
                   Index classes, std::string name = "mlp");

Model build_lenet_lite(const Shape& input_shape, Index classes,
                       std::uint64_t seed);
Model build_mlp_blobs(Index input_dim, const std::vector<Index>& hidden_dims,
                      Index classes, std::uint64_t seed);

/// Flat binary tensor archive: magic "AGRV", version u32, count u32, then
/// per tensor: name length u32 + UTF-8 name, rank u32, dims u64 each,
/// little-endian f64 payload.
void save_tensors(const std::filesystem::path& file,
                  const std::vector<std::string>& names,
                  const std::vector<Tensor>& tensors);
std::vector<std::pair<std::string, Tensor>> load_tensors(
    const std::filesystem::path& file);

}  // namespace agrav
