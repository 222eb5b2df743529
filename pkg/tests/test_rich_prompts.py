"""Tests for rich-based prompts and report tables."""

from unittest.mock import patch

from src.utils.rich_prompts import (
    confirm_overwrite,
    should_overwrite,
    show_report,
    show_rows,
)


class TestRichPrompts:
    @patch("src.utils.rich_prompts.Confirm.ask", return_value=True)
    @patch("src.utils.rich_prompts.console")
    def test_confirm_overwrite_user_confirms(self, mock_console, mock_confirm_ask):
        """Test that confirm_overwrite returns True when user confirms"""
        # When
        result = confirm_overwrite("runs/model.json")

        # Then
        assert result is True
        mock_confirm_ask.assert_called_once()
        assert mock_confirm_ask.call_args.kwargs["default"] is False
        mock_console.print.assert_called()

    @patch("src.utils.rich_prompts.Confirm.ask", return_value=False)
    @patch("src.utils.rich_prompts.console")
    def test_confirm_overwrite_user_declines(self, mock_console, mock_confirm_ask):
        """Test that confirm_overwrite returns False when user declines"""
        # When
        result = confirm_overwrite("runs/model.json")

        # Then
        assert result is False
        mock_confirm_ask.assert_called_once()
        mock_console.print.assert_called()

    @patch("src.utils.rich_prompts.confirm_overwrite")
    def test_should_overwrite_skips_prompt_with_yes(self, mock_confirm):
        """--yes writes without asking"""
        assert should_overwrite("m.json", assume_yes=True, interactive=True)
        mock_confirm.assert_not_called()

    @patch("src.utils.rich_prompts.confirm_overwrite")
    def test_should_overwrite_skips_prompt_without_terminal(self, mock_confirm):
        """Non-interactive runs never block on a prompt"""
        assert should_overwrite("m.json", assume_yes=False, interactive=False)
        mock_confirm.assert_not_called()

    @patch("src.utils.rich_prompts.confirm_overwrite", return_value=False)
    def test_should_overwrite_asks_on_terminal(self, mock_confirm):
        assert not should_overwrite("m.json", assume_yes=False, interactive=True)
        mock_confirm.assert_called_once_with("m.json")

    @patch("src.utils.rich_prompts.console")
    def test_show_report_prints_one_panel(self, mock_console):
        # When
        show_report("Evaluation", {"test_acc": 0.9612, "arithmetic": "affine"})

        # Then
        mock_console.print.assert_called_once()

    @patch("src.utils.rich_prompts.console")
    def test_show_rows_prints_a_table(self, mock_console):
        rows = [{"kappa": 0.5, "cert_acc": 0.9}, {"kappa": 0.8, "cert_acc": 0.95}]

        show_rows("Sweep", ("kappa", "cert_acc"), rows)

        table = mock_console.print.call_args.args[0]
        assert table.row_count == 2
        assert [column.header for column in table.columns] == ["kappa", "cert_acc"]
