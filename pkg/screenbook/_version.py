#
# Copyright © 2024 Intel Corporation
# SPDX-License-Identifier: Apache 2.0
#

__version__ = "v0.1.0"
