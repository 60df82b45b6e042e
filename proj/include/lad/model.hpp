#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lad/nn/parameters.hpp"
#include "lad/vocab.hpp"

namespace lad {

// Architecture and input-shape settings. Immutable once a model is built;
// stored verbatim in checkpoints.
struct Hyperparameters {
  int dim = 64;
  int heads = 4;
  int ff_dim = 128;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int lte_layers = 2;

  int max_input_len = 64;   // encoder positions: prefix + short-term + long-term
  int max_target_len = 32;  // decoder positions, EOS included
  int lte_max_len = 16;     // summary token + behavior tokens

  int prefix_max_tokens = 10;
  int short_behavior_max_tokens = 10;
  int short_max = 3;  // S: recent behaviors copied token-by-token
  int long_max = 7;   // L: past behaviors encoded to one vector each

  double output_init_std = 1e-3;
  bool length_normalize = true;
  std::uint64_t seed = 1;

  // Throws ConfigError on non-positive sizes or dim % heads != 0.
  void validate() const;
  bool operator==(const Hyperparameters&) const = default;
};

struct LinearIds {
  nn::ParamId weight = -1;
  nn::ParamId bias = -1;
};

struct NormIds {
  nn::ParamId gamma = -1;
  nn::ParamId beta = -1;
};

struct AttentionIds {
  LinearIds q, k, v, out;
};

struct EncoderLayerIds {
  NormIds norm1;
  AttentionIds self_attn;
  NormIds norm2;
  LinearIds ff1, ff2;
};

struct DecoderLayerIds {
  NormIds norm1;
  AttentionIds self_attn;
  NormIds norm2;
  AttentionIds cross_attn;
  NormIds norm3;
  LinearIds ff1, ff2;
};

struct ModelLayout {
  nn::ParamId token_embedding = -1;  // shared by LTE, encoder and decoder
  nn::ParamId segment_embedding = -1;
  std::vector<EncoderLayerIds> lte;
  NormIds lte_norm;
  std::vector<EncoderLayerIds> encoder;
  NormIds encoder_norm;
  std::vector<DecoderLayerIds> decoder;
  NormIds decoder_norm;
  LinearIds output;
};

// All learnable state of the long-term encoder and the generator, plus the
// vocabulary and hyperparameters that fix its shapes.
struct ModelState {
  Hyperparameters hp;
  Vocabulary vocab;
  nn::ParameterSet params;
  ModelLayout layout;
  nn::Matrix positions;  // sinusoidal table, not a parameter

  // Fresh model with weights drawn from hp.seed.
  static ModelState create(const Hyperparameters& hp, const Vocabulary& vocab);

  float embed_scale() const;
};

nn::Matrix sinusoidal_positions(int rows, int dim);

}  // namespace lad
