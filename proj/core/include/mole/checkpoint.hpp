#pragma once

#include <string>

#include "mole/model.hpp"

namespace mole {

/// Binary model checkpoint. Layout: magic + format version, the full
/// ModelConfig, then every tensor (base weight, per-expert A/B with rank and
/// alpha, router) in a fixed order. Doubles are stored as little-endian bit
/// patterns, so save -> load round-trips bit-exactly.
void save_checkpoint(const TinyLM& model, const std::string& path);

/// Throws IoError on missing/truncated files, ConfigMismatchError when the
/// stored tensors disagree with the stored config, ValidationError on
/// malformed expert/router shapes.
TinyLM load_checkpoint(const std::string& path);

/// Reads only the embedded ModelConfig (for cheap compatibility checks).
ModelConfig peek_checkpoint_config(const std::string& path);

} // namespace mole
