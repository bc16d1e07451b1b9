#pragma once

// glog-style CHECK from the torch headers collides with Catch's macro.
#undef CHECK
#include <catch_amalgamated.hpp>
