#pragma once

#include "swcert/errors.hpp"
#include "swcert/special_functions.hpp"
#include "swcert/rng.hpp"
#include "swcert/smoothing.hpp"
#include "swcert/stream.hpp"
#include "swcert/model.hpp"
#include "swcert/certificate.hpp"
#include "swcert/adversary.hpp"
#include "swcert/oracle.hpp"
#include "swcert/harness.hpp"
