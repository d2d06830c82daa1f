#pragma once

#include "bevseg/bevraster.hpp"
#include "bevseg/error.hpp"
#include "bevseg/eval.hpp"
#include "bevseg/io.hpp"
#include "bevseg/parserfill.hpp"
#include "bevseg/pipeline.hpp"
#include "bevseg/rig.hpp"
#include "bevseg/synthscene.hpp"
#include "bevseg/unproject.hpp"

namespace bevseg {
inline constexpr const char* kVersion = "0.1.0";
}
