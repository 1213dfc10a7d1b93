#pragma once

// Umbrella header for the numerical library (no JSON or CLI dependencies).
#include "sllt/error.hpp"
#include "sllt/kernel.hpp"
#include "sllt/linalg.hpp"
#include "sllt/model.hpp"
#include "sllt/observable.hpp"
#include "sllt/parallel.hpp"
#include "sllt/rng.hpp"
#include "sllt/simulate.hpp"
#include "sllt/spectral.hpp"
#include "sllt/variance.hpp"
#include "sllt/verify.hpp"
