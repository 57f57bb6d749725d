#include "carma/memory_model.hpp"

namespace carma {

Bytes ground_truth_memory(const ModelDescriptor& model, std::uint64_t batch_size,
                          const SimConstants& consts) {
    const Bytes params = model.total_params();
    const Bytes acts = model.total_activations();
    const Bytes raw = consts.bytes_per_value * consts.param_copies * params +
                      consts.bytes_per_value * batch_size * acts;
    const Bytes blocks = (raw + consts.alloc_block - 1) / consts.alloc_block;
    return consts.framework_base + blocks * consts.alloc_block;
}

}  // namespace carma
