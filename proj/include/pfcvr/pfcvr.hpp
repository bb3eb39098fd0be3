#pragma once

#include "pfcvr/autograd.hpp"
#include "pfcvr/bmria.hpp"
#include "pfcvr/checkpoint.hpp"
#include "pfcvr/config.hpp"
#include "pfcvr/datagen.hpp"
#include "pfcvr/evaluate.hpp"
#include "pfcvr/featurespace.hpp"
#include "pfcvr/image_io.hpp"
#include "pfcvr/lexicon.hpp"
#include "pfcvr/losses.hpp"
#include "pfcvr/matrix.hpp"
#include "pfcvr/metrics.hpp"
#include "pfcvr/model.hpp"
#include "pfcvr/nn.hpp"
#include "pfcvr/optim.hpp"
#include "pfcvr/plfa.hpp"
#include "pfcvr/rng.hpp"
#include "pfcvr/tokenizer.hpp"
#include "pfcvr/trainer.hpp"
