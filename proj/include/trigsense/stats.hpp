/*
 * Copyright 2026 The Trigsense Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef TRIGSENSE_STATS_HPP_
#define TRIGSENSE_STATS_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace trigsense::stats {

double Mean(std::span<const double> values);
// Population standard deviation (divides by n).
double PopulationStd(std::span<const double> values);

// 1-based ranks in ascending order; tied values share the average of the
// ranks they span.
std::vector<double> AverageRanks(std::span<const double> values);

// Pearson correlation. Throws kUndefinedResult for length < 2 or zero
// variance in either argument.
double Pearson(std::span<const double> a, std::span<const double> b);

// Spearman correlation: Pearson on average ranks.
double Spearman(std::span<const double> a, std::span<const double> b);

// Min-max scaling to [0, 1]. A constant vector maps to all zeros.
std::vector<double> MinMaxNormalize(std::span<const double> values);

// Indices sorted by value descending; ties keep the lower index first.
std::vector<std::size_t> ArgsortDescending(std::span<const double> values);

}  // namespace trigsense::stats

#endif  // TRIGSENSE_STATS_HPP_
