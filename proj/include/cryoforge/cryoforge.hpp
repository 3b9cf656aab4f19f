#pragma once

#include "cryoforge/apt/polyphase.hpp"
#include "cryoforge/apt/selection.hpp"
#include "cryoforge/apt/steerable.hpp"
#include "cryoforge/apt/verify.hpp"
#include "cryoforge/core/error.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/rng.hpp"
#include "cryoforge/geometry.hpp"
#include "cryoforge/io/metadata.hpp"
#include "cryoforge/io/mrc.hpp"
#include "cryoforge/nrcl.hpp"
#include "cryoforge/pipeline.hpp"
#include "cryoforge/recon.hpp"
#include "cryoforge/scene.hpp"
#include "cryoforge/structure.hpp"
#include "cryoforge/subtomo.hpp"
#include "cryoforge/tiltalign.hpp"
#include "cryoforge/tiltsim.hpp"
