#ifndef MCPARAREAL_HPP
#define MCPARAREAL_HPP

#include "mcparareal/convergence.hpp"
#include "mcparareal/coupling.hpp"
#include "mcparareal/errors.hpp"
#include "mcparareal/integrator.hpp"
#include "mcparareal/macro_state.hpp"
#include "mcparareal/metrics.hpp"
#include "mcparareal/model.hpp"
#include "mcparareal/moment_models.hpp"
#include "mcparareal/parareal.hpp"
#include "mcparareal/particles.hpp"
#include "mcparareal/rng.hpp"
#include "mcparareal/wasserstein.hpp"

#endif
