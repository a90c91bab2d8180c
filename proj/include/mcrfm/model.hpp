#pragma once

#include "mcrfm/heads.hpp"
#include "mcrfm/projector.hpp"
#include "mcrfm/task_context.hpp"
#include "mcrfm/vector_field.hpp"

namespace mcrfm {

/// Every trainable parameter of the adapter for one episode.
struct AdapterParams {
  ModelConfig config;
  std::size_t num_classes = 0;
  projector::ProjectorParams projector;
  task::EncoderParams encoder;
  field::VectorFieldParams field;
  heads::HeadParams head;

  /// Initialization is a pure function of (config, K, seed).
  static AdapterParams make(const ModelConfig& cfg, std::size_t num_classes, std::uint64_t seed);
  /// Fixed order: projector, encoder, field, head. Pointers stay valid while *this is not moved.
  nn::ParamList params();
  std::size_t parameter_count();
};

/// All parameter groups bound to one tape.
struct BoundAdapter {
  const ModelConfig* config = nullptr;
  projector::Bound projector;
  task::EncoderBound encoder;
  field::Bound field;
  heads::Bound head;
};
BoundAdapter bind(ad::Tape& tape, AdapterParams& p);

}  // namespace mcrfm
