#pragma once

#include "fishloc/camera_model.hpp"
#include "fishloc/error.hpp"
#include "fishloc/evaluation.hpp"
#include "fishloc/image.hpp"
#include "fishloc/image_io.hpp"
#include "fishloc/mi_registration.hpp"
#include "fishloc/mutual_information.hpp"
#include "fishloc/pnp.hpp"
#include "fishloc/prior_map.hpp"
#include "fishloc/serialization.hpp"
#include "fishloc/synthetic.hpp"
#include "fishloc/text_io.hpp"
