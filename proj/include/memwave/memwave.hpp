#pragma once

#include "memwave/config.hpp"
#include "memwave/delay.hpp"
#include "memwave/diagnostics.hpp"
#include "memwave/errors.hpp"
#include "memwave/history.hpp"
#include "memwave/integrator.hpp"
#include "memwave/kernels.hpp"
#include "memwave/profiles.hpp"
#include "memwave/runner.hpp"
#include "memwave/spectral.hpp"
#include "memwave/state.hpp"
#include "memwave/theory.hpp"
