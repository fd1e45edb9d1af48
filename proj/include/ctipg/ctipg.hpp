#pragma once

#include "ctipg/types.hpp"
#include "ctipg/cover_tree.hpp"
#include "ctipg/model.hpp"
#include "ctipg/operators.hpp"
#include "ctipg/solver.hpp"
#include "ctipg/mrf.hpp"
#include "ctipg/harness.hpp"
