#pragma once

#include "relprop/config.hpp"
#include "relprop/entity.hpp"
#include "relprop/error.hpp"
#include "relprop/eval.hpp"
#include "relprop/ingest.hpp"
#include "relprop/model.hpp"
#include "relprop/network.hpp"
#include "relprop/rng.hpp"
#include "relprop/synth.hpp"
#include "relprop/text.hpp"
#include "relprop/train.hpp"
