"""Rendering tests: every committed recipe renders and is pixel-stable."""

import sys
from pathlib import Path

import pytest

PLOTS_DIR = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PLOTS_DIR))

from render import DataError, FigureRecipe, RecipeError, main, render  # noqa: E402

RECIPES = sorted((PLOTS_DIR / "recipes").glob("*.ini"))


@pytest.mark.parametrize("recipe_path", RECIPES, ids=lambda p: p.stem)
def test_recipe_renders_and_is_pixel_stable(recipe_path, tmp_path):
    recipe = FigureRecipe.load(recipe_path)
    first = render(recipe, tmp_path / "a.png")
    second = render(recipe, tmp_path / "b.png")
    data = first.read_bytes()
    assert len(data) > 1000
    assert data == second.read_bytes()


def test_inputs_must_exist(tmp_path):
    recipe_file = tmp_path / "r.ini"
    recipe_file.write_text("[figure]\nid = collapse\ninput = missing.csv\n")
    recipe = FigureRecipe.load(recipe_file)
    with pytest.raises(DataError, match="does not exist"):
        render(recipe, tmp_path / "x.png")


def test_schema_is_checked(tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("# schema=2\nt,x,y,valid\n1,1,1,1\n")
    recipe_file = tmp_path / "r.ini"
    recipe_file.write_text(f"[figure]\nid = collapse\ninput = {csv.name}\n")
    recipe = FigureRecipe.load(recipe_file)
    with pytest.raises(DataError, match="schema"):
        render(recipe, tmp_path / "x.png")


def test_empty_rows_rejected(tmp_path):
    csv = tmp_path / "empty.csv"
    csv.write_text("# schema=1\nt,x,y,valid\n")
    recipe_file = tmp_path / "r.ini"
    recipe_file.write_text(f"[figure]\nid = collapse\ninput = {csv.name}\n")
    recipe = FigureRecipe.load(recipe_file)
    with pytest.raises(DataError, match="no data rows"):
        render(recipe, tmp_path / "x.png")
    assert not (tmp_path / "x.png").exists()


def test_missing_columns_rejected(tmp_path):
    csv = tmp_path / "cols.csv"
    csv.write_text("# schema=1\nt,x\n1.0,2.0\n")
    recipe_file = tmp_path / "r.ini"
    recipe_file.write_text(f"[figure]\nid = collapse\ninput = {csv.name}\n")
    recipe = FigureRecipe.load(recipe_file)
    with pytest.raises(DataError, match="missing columns"):
        render(recipe, tmp_path / "x.png")


def test_unknown_figure_id(tmp_path):
    recipe_file = tmp_path / "r.ini"
    recipe_file.write_text("[figure]\nid = pie-chart\ninput = x.csv\n")
    with pytest.raises(RecipeError, match="unknown figure id"):
        FigureRecipe.load(recipe_file)


def test_cli_exit_codes(tmp_path):
    recipe_file = tmp_path / "r.ini"
    recipe_file.write_text("[figure]\nid = collapse\ninput = missing.csv\n")
    assert main(["--recipe", str(recipe_file),
                 "--out", str(tmp_path / "o.png")]) == 2
    good = PLOTS_DIR / "recipes" / "benchmark.ini"
    assert main(["--recipe", str(good),
                 "--out", str(tmp_path / "bench.png")]) == 0
    assert (tmp_path / "bench.png").exists()
