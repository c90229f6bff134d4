#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "hpqa/trainer.hpp"

namespace hpqa {

// Directory layout: manifest.json (config echo, learned tasks, boundaries,
// memory samples, tensor index, digests) + tensors.bin (raw little-endian
// float32 arrays). save -> load -> save is byte-identical.
void save_checkpoint(Trainer& trainer, const std::string& dir);

struct LoadedCheckpoint {
    RunConfig config;
    Vocab vocab;
    std::unique_ptr<Trainer> trainer;
};

// Verifies content digests and the cached memory query vectors; refuses on
// any mismatch.
LoadedCheckpoint load_checkpoint(const std::string& dir);

// Digest over manifest and tensor bytes; equal runs produce equal digests.
std::uint64_t checkpoint_digest(const std::string& dir);

}  // namespace hpqa
