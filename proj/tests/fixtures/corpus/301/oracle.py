# SPDX-License-Identifier: Apache-2.0
def test_oracle_letters():
    assert sorted(code301("(a)())()")) == ["(a())()", "(a)()()"]

def test_oracle_empty_result():
    assert code301(")(") == [""]

def test_oracle_already_valid():
    assert code301("x") == ["x"]
