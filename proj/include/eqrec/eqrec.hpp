#pragma once

// Umbrella header for the equilibrium-reconstruction library.

#include "eqrec/basis.hpp"
#include "eqrec/errors.hpp"
#include "eqrec/flux.hpp"
#include "eqrec/measurements.hpp"
#include "eqrec/mesh.hpp"
#include "eqrec/observation.hpp"
#include "eqrec/outputs.hpp"
#include "eqrec/profiles.hpp"
#include "eqrec/reconstruction.hpp"
#include "eqrec/stiffness.hpp"
#include "eqrec/twin.hpp"
