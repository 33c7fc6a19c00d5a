// checkpoint.hpp
// Self-describing model container, format identifier "TLSFS1": a JSON header
// (model configuration, epoch, dataset statistics, tensor directory,
// optimizer state flags) followed by raw little-endian float32 tensors.

#pragma once

#include <filesystem>
#include <memory>

#include "defsurf/model.hpp"
#include "defsurf/nn.hpp"

namespace defsurf {

inline constexpr char kCheckpointMagic[] = "TLSFS1";

struct Checkpoint {
  ModelConfig config;
  int epoch = 0;
  // Mean masked training depth (mm); gauge for normal integration at
  // evaluation time. Zero when unknown.
  double train_mean_depth = 0;
  std::vector<nn::Matrix<float>> weights;
  bool has_optimizer = false;
  long adam_step = 0;
  std::vector<nn::Matrix<float>> adam_m, adam_v;

  // Builds a network and loads the stored weights into it.
  std::unique_ptr<SurfaceNetF> make_net() const;
};

void save_checkpoint(const std::filesystem::path& path, const SurfaceNetF& net,
                     int epoch, double train_mean_depth,
                     nn::Adam<float>* optimizer = nullptr);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace defsurf
