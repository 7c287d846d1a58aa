#pragma once

#include "spinpump/model.hpp"
#include "spinpump/rng.hpp"
#include "spinpump/parallel.hpp"
#include "spinpump/classical.hpp"
#include "spinpump/fft.hpp"
#include "spinpump/quantum.hpp"
#include "spinpump/floquet.hpp"
#include "spinpump/pipeline.hpp"
#include "spinpump/checkpoint.hpp"
#include "spinpump/config.hpp"
#include "spinpump/experiments.hpp"
