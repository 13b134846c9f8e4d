import warnings

import pytest

import torch

from pyregime import misc


def test_as_tensor():
    actual = misc.as_tensor([1, 2])
    assert actual.dtype == torch.float64
    assert torch.equal(actual, torch.tensor([1.0, 2.0], dtype=torch.float64))


def test_as_tensor_no_copy():
    x = torch.zeros(3, dtype=torch.float64)
    assert misc.as_tensor(x) is x


def test_get_generator_seed():
    a = torch.rand(5, generator=misc.get_generator(0))
    b = torch.rand(5, generator=misc.get_generator(0))
    assert torch.equal(a, b)


def test_get_generator_passthrough():
    generator = torch.Generator()
    assert misc.get_generator(generator) is generator


def test_verify_str_arg():
    arg = None
    with pytest.raises(ValueError):
        misc.verify_str_arg(arg)

    arg = "foo"
    valid_args = ("bar", "baz")
    with pytest.raises(ValueError):
        misc.verify_str_arg(arg, valid_args=valid_args)

    arg = "foo"
    valid_args = ("foo", "bar")

    actual = misc.verify_str_arg(arg, valid_args=valid_args)
    desired = arg
    assert actual == desired


def test_verify_str_arg_message():
    with pytest.raises(ValueError, match="optimizer has to be one of .lbfgs., .gd."):
        misc.verify_str_arg("adam", "optimizer", ("lbfgs", "gd"))


def test_verify_discount(subtests):
    for gamma in (0.0, 0.5, 0.99):
        with subtests.test(gamma=gamma):
            assert misc.verify_discount(gamma) == gamma

    for gamma in (-0.1, 1.0, 1.5):
        with subtests.test(gamma=gamma):
            with pytest.raises(ValueError):
                misc.verify_discount(gamma)


def test_verify_discount_finite_horizon():
    assert misc.verify_discount(1.0, finite_horizon=True) == 1.0
    with pytest.raises(ValueError):
        misc.verify_discount(1.01, finite_horizon=True)


def test_build_complex_obj_repr():
    name = "TabularMDP"
    properties = {"num_states": 5, "num_actions": 2}
    actual = misc.build_complex_obj_repr(name, properties=properties)
    desired = "TabularMDP(num_states=5, num_actions=2)"
    assert actual == desired


def test_build_complex_obj_repr_children():
    class Child:
        def __str__(self):
            return "Child()"

    actual = misc.build_complex_obj_repr(
        "Parent", properties={"gamma": 0.9}, named_children=(("child", Child()),)
    )
    desired = "\n".join(("Parent(", "  gamma=0.9", "  (child): Child()", ")"))
    assert actual == desired


def test_build_complex_obj_repr_line_length():
    properties = {"lambda_grid": (0.1, 0.5), "gamma": 0.9}
    actual = misc.build_complex_obj_repr("PTConfig", properties, line_length=20)
    desired = "\n".join(
        ("PTConfig(", "  lambda_grid=(0.1, 0.5),", "  gamma=0.9", ")")
    )
    assert actual == desired


def test_suppress_warnings():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with misc.suppress_warnings(RuntimeWarning):
            warnings.warn("suppressed", RuntimeWarning)
        warnings.warn("recorded", UserWarning)

    assert [str(warning.message) for warning in caught] == ["recorded"]
