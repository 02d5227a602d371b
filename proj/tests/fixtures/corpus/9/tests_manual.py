# SPDX-License-Identifier: Apache-2.0
# provenance: manual

def test_palindrome_positive():
    assert code9(121) == True

def test_negative_is_not_palindrome():
    assert code9(-121) == False
