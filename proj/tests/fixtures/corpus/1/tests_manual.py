# SPDX-License-Identifier: Apache-2.0
# provenance: manual

# partition: x:positive, y:positive
def test_add_positives():
    assert code1(2, 3) == 5

# partition: x:negative, y:positive
def test_add_mixed():
    assert code1(-2, 3) == 1
