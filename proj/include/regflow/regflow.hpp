#ifndef REGFLOW_REGFLOW_HPP
#define REGFLOW_REGFLOW_HPP

#include "regflow/core.hpp"
#include "regflow/geometry.hpp"
#include "regflow/quadrature.hpp"
#include "regflow/mesh_io.hpp"
#include "regflow/basis.hpp"
#include "regflow/gram.hpp"
#include "regflow/fields.hpp"
#include "regflow/targets.hpp"
#include "regflow/vectorflow.hpp"
#include "regflow/compositional.hpp"
#include "regflow/optimizer.hpp"
#include "regflow/modal.hpp"

#endif  // REGFLOW_REGFLOW_HPP
