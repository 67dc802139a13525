#pragma once

#include <string>

#include "usflab/flows.hpp"
#include "usflab/hybridvae.hpp"
#include "usflab/oneclass.hpp"

namespace usflab {

/// Checkpoints are self-describing flat text files with the versioned
/// header "usflab-ckpt-v1" and a kind tag ("usf", "non-usf", "svdd",
/// "vae-flow"). Values are written with shortest-round-trip formatting,
/// so a save/load cycle is bit exact.

void save_flow_checkpoint(const FlowModel& model, const std::string& path);
FlowModel load_flow_checkpoint(const std::string& path);

void save_svdd_checkpoint(const SvddModel& model, const std::string& path);
SvddModel load_svdd_checkpoint(const std::string& path);

void save_vae_checkpoint(const VaeModel& model, const std::string& path);
VaeModel load_vae_checkpoint(const std::string& path);

/// Kind tag of an existing checkpoint file.
std::string checkpoint_kind(const std::string& path);

} // namespace usflab
