#ifndef N2M_N2M_HPP_
#define N2M_N2M_HPP_

#include "n2m/capture.hpp"
#include "n2m/dataset.hpp"
#include "n2m/error.hpp"
#include "n2m/geometry.hpp"
#include "n2m/gmm.hpp"
#include "n2m/harness.hpp"
#include "n2m/json_io.hpp"
#include "n2m/loss.hpp"
#include "n2m/model.hpp"
#include "n2m/ply.hpp"
#include "n2m/point_cloud.hpp"
#include "n2m/random.hpp"
#include "n2m/regions.hpp"
#include "n2m/render.hpp"
#include "n2m/scene.hpp"
#include "n2m/train.hpp"
#include "n2m/transition.hpp"

#endif // N2M_N2M_HPP_
