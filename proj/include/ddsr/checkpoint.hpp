#pragma once

#include "ddsr/model.hpp"

namespace ddsr {

// Binary container: magic "DDSR", u32 format version, the ModelConfig fields
// as little-endian i32, a u32 flag word (bit 0: FDA present), then a table of
// (name, dtype, rank, shape, row-major f32 payload). Adapter entries live
// under "<target>.lora.down" / "<target>.lora.up".
void save_checkpoint(const std::string& path, const Model<float>& model);

// Validates magic/version, rebuilds the model skeleton from the stored
// config, checks name completeness both ways and shape agreement, and
// reattaches any adapters found in the table.
Model<float> load_checkpoint(const std::string& path);

}  // namespace ddsr
