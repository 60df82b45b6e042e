#include "lad/model.hpp"

#include <algorithm>
#include <cmath>

#include "lad/error.hpp"

namespace lad {

void Hyperparameters::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(dim, "dim");
  positive(heads, "heads");
  positive(ff_dim, "ff_dim");
  positive(encoder_layers, "encoder_layers");
  positive(decoder_layers, "decoder_layers");
  positive(lte_layers, "lte_layers");
  positive(max_input_len, "max_input_len");
  positive(max_target_len, "max_target_len");
  positive(lte_max_len, "lte_max_len");
  positive(prefix_max_tokens, "prefix_max_tokens");
  positive(short_behavior_max_tokens, "short_behavior_max_tokens");
  if (short_max < 0 || long_max < 0) throw ConfigError("short_max and long_max must be >= 0");
  if (lte_max_len < 2) throw ConfigError("lte_max_len must leave room for the summary token");
  if (dim % heads != 0) throw ConfigError("dim must be divisible by heads");
  if (!(output_init_std >= 0.0)) throw ConfigError("output_init_std must be >= 0");
}

nn::Matrix sinusoidal_positions(int rows, int dim) {
  nn::Matrix table(rows, dim);
  for (int pos = 0; pos < rows; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
      table(pos, i) = static_cast<float>(std::sin(pos * freq));
      if (i + 1 < dim) table(pos, i + 1) = static_cast<float>(std::cos(pos * freq));
    }
  }
  return table;
}

namespace {

class Builder {
 public:
  Builder(nn::ParameterSet& params, Rng& rng) : params_(params), rng_(rng) {}

  LinearIds linear(const std::string& name, int in, int out, double stddev = -1.0) {
    if (stddev < 0.0) stddev = std::sqrt(2.0 / (in + out));
    return {params_.add_normal(name + ".weight", in, out, stddev, rng_), params_.add(name + ".bias", 1, out)};
  }

  NormIds norm(const std::string& name, int dim) {
    return {params_.add_constant(name + ".gamma", 1, dim, 1.0f), params_.add(name + ".beta", 1, dim)};
  }

  AttentionIds attention(const std::string& name, int dim) {
    return {linear(name + ".q", dim, dim), linear(name + ".k", dim, dim), linear(name + ".v", dim, dim),
            linear(name + ".out", dim, dim)};
  }

  EncoderLayerIds encoder_layer(const std::string& name, const Hyperparameters& hp) {
    EncoderLayerIds l;
    l.norm1 = norm(name + ".norm1", hp.dim);
    l.self_attn = attention(name + ".self_attn", hp.dim);
    l.norm2 = norm(name + ".norm2", hp.dim);
    l.ff1 = linear(name + ".ff1", hp.dim, hp.ff_dim);
    l.ff2 = linear(name + ".ff2", hp.ff_dim, hp.dim);
    return l;
  }

  DecoderLayerIds decoder_layer(const std::string& name, const Hyperparameters& hp) {
    DecoderLayerIds l;
    l.norm1 = norm(name + ".norm1", hp.dim);
    l.self_attn = attention(name + ".self_attn", hp.dim);
    l.norm2 = norm(name + ".norm2", hp.dim);
    l.cross_attn = attention(name + ".cross_attn", hp.dim);
    l.norm3 = norm(name + ".norm3", hp.dim);
    l.ff1 = linear(name + ".ff1", hp.dim, hp.ff_dim);
    l.ff2 = linear(name + ".ff2", hp.ff_dim, hp.dim);
    return l;
  }

  nn::ParameterSet& params_;
  Rng& rng_;
};

}  // namespace

ModelState ModelState::create(const Hyperparameters& hp, const Vocabulary& vocab) {
  hp.validate();
  ModelState m{hp, vocab, {}, {}, {}};
  Rng rng(hp.seed);
  Builder b(m.params, rng);
  const int v = static_cast<int>(vocab.size());
  m.layout.token_embedding = m.params.add_normal("token_embedding", v, hp.dim, 1.0 / std::sqrt(hp.dim), rng);
  m.layout.segment_embedding = m.params.add_normal("segment_embedding", 3, hp.dim, 0.1, rng);
  for (int i = 0; i < hp.lte_layers; ++i) m.layout.lte.push_back(b.encoder_layer("lte." + std::to_string(i), hp));
  m.layout.lte_norm = b.norm("lte.norm", hp.dim);
  for (int i = 0; i < hp.encoder_layers; ++i) {
    m.layout.encoder.push_back(b.encoder_layer("encoder." + std::to_string(i), hp));
  }
  m.layout.encoder_norm = b.norm("encoder.norm", hp.dim);
  for (int i = 0; i < hp.decoder_layers; ++i) {
    m.layout.decoder.push_back(b.decoder_layer("decoder." + std::to_string(i), hp));
  }
  m.layout.decoder_norm = b.norm("decoder.norm", hp.dim);
  m.layout.output = b.linear("output", hp.dim, v, hp.output_init_std);
  m.positions = sinusoidal_positions(std::max({hp.max_input_len, hp.max_target_len, hp.lte_max_len}), hp.dim);
  return m;
}

float ModelState::embed_scale() const { return std::sqrt(static_cast<float>(hp.dim)); }

}  // namespace lad
