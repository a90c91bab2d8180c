#include "mcrfm/model.hpp"

namespace mcrfm {

namespace {
enum : std::uint64_t { kTagProjector = 11, kTagEncoder = 12, kTagField = 13, kTagHead = 14 };
}

AdapterParams AdapterParams::make(const ModelConfig& cfg, std::size_t num_classes, std::uint64_t seed) {
  AdapterParams p;
  p.config = cfg;
  p.num_classes = num_classes;
  CounterRng r_proj(stream_key(seed, kTagProjector));
  CounterRng r_enc(stream_key(seed, kTagEncoder));
  CounterRng r_field(stream_key(seed, kTagField));
  CounterRng r_head(stream_key(seed, kTagHead));
  p.projector = projector::ProjectorParams::make(cfg, r_proj);
  p.encoder = task::EncoderParams::make(cfg, r_enc);
  p.field = field::VectorFieldParams::make(cfg, r_field);
  p.head = heads::HeadParams::make(cfg, num_classes, r_head);
  return p;
}

nn::ParamList AdapterParams::params() {
  nn::ParamList out;
  projector.collect(out);
  encoder.collect(out);
  field.collect(out);
  head.collect(out);
  return out;
}

std::size_t AdapterParams::parameter_count() {
  std::size_t n = 0;
  for (const ad::ParamTensor* t : params()) n += t->value.size();
  return n;
}

BoundAdapter bind(ad::Tape& tape, AdapterParams& p) {
  BoundAdapter b;
  b.config = &p.config;
  b.projector = projector::bind(tape, p.projector, p.config);
  b.encoder = task::bind(tape, p.encoder);
  b.field = field::bind(tape, p.field);
  b.head = heads::bind(tape, p.head);
  return b;
}

}  // namespace mcrfm
