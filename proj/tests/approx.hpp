#pragma once

#include <doctest.h>

// doctest::Approx adds an absolute floor of epsilon; quantities in seconds
// need a purely relative comparison.
inline doctest::Approx approx(double value) { return doctest::Approx(value).scale(0.0); }
