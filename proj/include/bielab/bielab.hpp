#pragma once

#include "bielab/core.hpp"
#include "bielab/kernels.hpp"
#include "bielab/geometry.hpp"
#include "bielab/layer_potentials.hpp"
#include "bielab/nt_maximal.hpp"
#include "bielab/harmonic_bvp.hpp"
#include "bielab/biharmonic_bvp.hpp"
#include "bielab/function_spaces.hpp"
#include "bielab/estimate_lab.hpp"
#include "bielab/experiments.hpp"
