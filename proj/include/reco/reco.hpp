#pragma once

#include "reco/checkpoint.hpp"
#include "reco/config.hpp"
#include "reco/data.hpp"
#include "reco/eacvae.hpp"
#include "reco/embedding.hpp"
#include "reco/error.hpp"
#include "reco/gradcheck.hpp"
#include "reco/losses.hpp"
#include "reco/metrics.hpp"
#include "reco/model.hpp"
#include "reco/param_store.hpp"
#include "reco/predictor.hpp"
#include "reco/rng.hpp"
#include "reco/srnn.hpp"
#include "reco/tensor.hpp"
#include "reco/text.hpp"
#include "reco/trainer.hpp"
#include "reco/verify.hpp"
