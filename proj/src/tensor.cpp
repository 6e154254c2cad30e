#include "vtr/tensor.hpp"

namespace vtr::core {

thread_local Tape* Tape::current_ = nullptr;

}  // namespace vtr::core
