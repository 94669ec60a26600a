#pragma once

#include "protobeam/ablation.hpp"
#include "protobeam/config.hpp"
#include "protobeam/csv.hpp"
#include "protobeam/dataset.hpp"
#include "protobeam/embedding.hpp"
#include "protobeam/encoder.hpp"
#include "protobeam/errors.hpp"
#include "protobeam/eval.hpp"
#include "protobeam/hdf5_io.hpp"
#include "protobeam/iq_block.hpp"
#include "protobeam/nn.hpp"
#include "protobeam/pca.hpp"
#include "protobeam/preprocess.hpp"
#include "protobeam/protonet.hpp"
#include "protobeam/rng.hpp"
#include "protobeam/serialize.hpp"
#include "protobeam/synth.hpp"
#include "protobeam/tensor.hpp"
#include "protobeam/trainer.hpp"
#include "protobeam/version.hpp"
