#pragma once

// Umbrella header: the whole library.

#include "ucorr/forest.hpp"       // IWYU pragma: export
#include "ucorr/inference.hpp"    // IWYU pragma: export
#include "ucorr/parallel.hpp"     // IWYU pragma: export
#include "ucorr/random.hpp"       // IWYU pragma: export
#include "ucorr/rank_space.hpp"   // IWYU pragma: export
#include "ucorr/simulate.hpp"     // IWYU pragma: export
#include "ucorr/tree.hpp"         // IWYU pragma: export
#include "ucorr/version.hpp"      // IWYU pragma: export
