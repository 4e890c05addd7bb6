# This file is part of ts_ucacopf.
#
# Developed for Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

__all__ = ["CONFIG_SCHEMA"]

import yaml

CONFIG_SCHEMA = yaml.safe_load(
    """
$schema: http://json-schema.org/draft-07/schema#
$id: https://github.com/lsst-ts/ts_ucacopf/blob/main/python/lsst/ts/ucacopf/config_schema.py
# title must end with one or more spaces followed by the schema version, which must begin with "v"
title: UcAcopf v1
description: Schema for UC-ACOPF scenario files
type: object
definitions:
  uc_params:
    type: object
    properties: &uc_properties
      min_up:
        description: Minimum number of periods a unit stays on after a startup.
        type: integer
        minimum: 1
      min_down:
        description: Minimum number of periods a unit stays off after a shutdown.
        type: integer
        minimum: 1
      ramp_up:
        description: Ramp-up limit (per-unit per period).
        type: number
        minimum: 0
      ramp_down:
        description: Ramp-down limit (per-unit per period).
        type: number
        minimum: 0
      startup_ramp:
        description: Largest output (per-unit) in the period of a startup.
        type: number
        minimum: 0
      shutdown_ramp:
        description: Largest output (per-unit) in the period before a shutdown.
        type: number
        minimum: 0
      initial_on:
        description: Commitment status before the first period.
        type: boolean
      forced_on:
        description: Remaining periods the unit must stay on at the start of the horizon.
        type: integer
        minimum: 0
      forced_off:
        description: Remaining periods the unit must stay off at the start of the horizon.
        type: integer
        minimum: 0
      op_cost:
        description: No-load cost charged in every committed period ($/h).
        type: number
      su_cost:
        description: Startup cost ($).
        type: number
      sd_cost:
        description: Shutdown cost ($).
        type: number
    additionalProperties: false
properties:
  horizon:
    description: Number of periods in the schedule.
    type: integer
    minimum: 1
  discount:
    description: Factor applied to the base-case demand on top of the profile.
    type: number
    exclusiveMinimum: 0
  profile:
    description: >-
      CSV file with one demand factor per line.
      A relative path is resolved against the directory of the scenario file.
    type: string
  initial_dispatch:
    description: Rule that sets the dispatch before the first period.
    type: string
    enum: ["demand-share", "midpoint"]
  default_rate:
    description: Apparent power limit (per-unit) used for branches with a rate of 0.
    type: number
    exclusiveMinimum: 0
  warm_start_threshold:
    description: Dispatch (per-unit) above which the warm start commits a unit.
    type: number
    minimum: 0
  uc_defaults:
    description: Commitment parameters applied to every generator.
    $ref: "#/definitions/uc_params"
  generators:
    description: Per-generator overrides, keyed by the 0-based generator index.
    type: array
    items:
      type: object
      properties:
        <<: *uc_properties
        index:
          type: integer
          minimum: 0
        initial_dispatch_mw:
          description: Dispatch (MW) before the first period.
          type: number
          minimum: 0
      required:
        - index
      additionalProperties: false
  solver:
    description: ADMM settings.
    type: object
    properties:
      rho_pq:
        type: number
        exclusiveMinimum: 0
      rho_va:
        type: number
        exclusiveMinimum: 0
      rho_uc:
        type: number
        exclusiveMinimum: 0
      beta0:
        type: number
        exclusiveMinimum: 0
      tau:
        type: number
        exclusiveMinimum: 1
      theta:
        type: number
        exclusiveMinimum: 0
        exclusiveMaximum: 1
      epsilon:
        type: number
        exclusiveMinimum: 0
      lambda_bound:
        type: number
        exclusiveMinimum: 0
      max_outer:
        type: integer
        minimum: 1
      max_inner:
        type: integer
        minimum: 1
      inner_primal_tol:
        type: number
        exclusiveMinimum: 0
      inner_dual_tol:
        type: number
        exclusiveMinimum: 0
      workers:
        type: integer
        minimum: 1
      seed:
        type: integer
        minimum: 0
    additionalProperties: false
additionalProperties: false
"""
)
