#pragma once

#include "softarm/geometry.hpp"
#include "softarm/tet_mesh.hpp"
#include "softarm/tmesh_io.hpp"
#include "softarm/arm_generator.hpp"
#include "softarm/barycentric.hpp"
#include "softarm/materials.hpp"
#include "softarm/dynamics.hpp"
#include "softarm/actuation.hpp"
#include "softarm/controller.hpp"
#include "softarm/config_file.hpp"
#include "softarm/scene.hpp"
#include "softarm/experiments.hpp"
#include "softarm/validation.hpp"
