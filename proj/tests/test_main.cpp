// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
