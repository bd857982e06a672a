#pragma once

#include <stdexcept>

namespace hipprune {

// A caller broke a documented precondition (unsorted input, empty chunk, ...).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace hipprune
