#pragma once

#include <cstdint>
#include <vector>

#include "aspers/core/network.hpp"

namespace aspers {

/// Encoder widths (the last one is the embedding width) and the head's
/// hidden width. The head is hidden ReLU layer + linear output; a zero
/// head_hidden gives a single linear layer.
struct Architecture {
  std::vector<std::size_t> encoder_hidden{64, 32};
  std::size_t head_hidden = 16;

  std::size_t embedding_dim() const { return encoder_hidden.back(); }
  void validate() const;
};

/// Prediction = head(encoder(x)).
struct PersonalModel {
  Mlp encoder;
  Mlp head;

  Matrix predict(const Matrix& x) const;
  bool same_parameters(const PersonalModel& o) const {
    return encoder.same_parameters(o.encoder) && head.same_parameters(o.head);
  }
};

struct ModelGrad {
  NetworkGrad encoder;
  NetworkGrad head;

  void scale(double k);
  void add_scaled(const ModelGrad& other, double k);
};

ModelGrad zero_grad(const PersonalModel& model);

Mlp make_encoder(std::size_t input_dim, const Architecture& arch, Rng& rng);
Mlp make_head(const Architecture& arch, Rng& rng);

/// Fresh model: encoder from the "init/encoder" stream of `seed`, head from
/// "init/head". Two calls with the same seed agree bit for bit.
PersonalModel init_model(std::size_t input_dim, const Architecture& arch,
                         std::uint64_t seed);

/// Fresh head from the "init/head" stream of `seed`.
Mlp init_head(const Architecture& arch, std::uint64_t seed);

}  // namespace aspers
