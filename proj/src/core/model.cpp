#include "aspers/core/model.hpp"

#include "aspers/error.hpp"

namespace aspers {

void Architecture::validate() const {
  if (encoder_hidden.empty()) throw ConfigError("encoder needs at least one layer");
  for (std::size_t w : encoder_hidden)
    if (w == 0) throw ConfigError("encoder widths must be >= 1");
}

Matrix PersonalModel::predict(const Matrix& x) const {
  return aspers::predict(head, aspers::predict(encoder, x));
}

void ModelGrad::scale(double k) {
  encoder.scale(k);
  head.scale(k);
}

void ModelGrad::add_scaled(const ModelGrad& other, double k) {
  encoder.add_scaled(other.encoder, k);
  head.add_scaled(other.head, k);
}

ModelGrad zero_grad(const PersonalModel& model) {
  return {model.encoder.zero_grad(), model.head.zero_grad()};
}

Mlp make_encoder(std::size_t input_dim, const Architecture& arch, Rng& rng) {
  std::vector<LayerSpec> specs;
  for (std::size_t w : arch.encoder_hidden) specs.push_back({w, Activation::ReLU});
  return make_mlp(input_dim, specs, rng);
}

Mlp make_head(const Architecture& arch, Rng& rng) {
  std::vector<LayerSpec> specs;
  if (arch.head_hidden > 0) specs.push_back({arch.head_hidden, Activation::ReLU});
  specs.push_back({1, Activation::Identity});
  return make_mlp(arch.embedding_dim(), specs, rng);
}

PersonalModel init_model(std::size_t input_dim, const Architecture& arch,
                         std::uint64_t seed) {
  arch.validate();
  Rng enc_rng = make_rng(seed, "init/encoder");
  return {make_encoder(input_dim, arch, enc_rng), init_head(arch, seed)};
}

Mlp init_head(const Architecture& arch, std::uint64_t seed) {
  Rng head_rng = make_rng(seed, "init/head");
  return make_head(arch, head_rng);
}

}  // namespace aspers
