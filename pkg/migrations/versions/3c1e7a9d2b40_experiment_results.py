"""Experiment runs and point results

Revision ID: 3c1e7a9d2b40
Revises:
Create Date: 2026-10-17 09:12:41.503118

"""
from typing import Sequence, Union

from alembic import op
import sqlalchemy as sa


# revision identifiers, used by Alembic.
revision: str = '3c1e7a9d2b40'
down_revision: Union[str, Sequence[str], None] = None
branch_labels: Union[str, Sequence[str], None] = None
depends_on: Union[str, Sequence[str], None] = None


def upgrade() -> None:
    """Upgrade schema."""
    op.create_table('experiment_runs',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('created_at', sa.DateTime(), nullable=True),
    sa.Column('kind', sa.String(length=16), nullable=False),
    sa.Column('config_json', sa.Text(), nullable=False),
    sa.Column('status', sa.String(length=16), nullable=False),
    sa.Column('error', sa.Text(), nullable=True),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_table('point_results',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('run_id', sa.Integer(), nullable=False),
    sa.Column('variant', sa.String(length=16), nullable=False),
    sa.Column('vcs', sa.Integer(), nullable=False),
    sa.Column('fault_count', sa.Integer(), nullable=False),
    sa.Column('placement', sa.String(length=16), nullable=False),
    sa.Column('pattern', sa.String(length=16), nullable=False),
    sa.Column('rate', sa.Float(), nullable=False),
    sa.Column('seed', sa.String(length=16), nullable=False),
    sa.Column('avg_latency', sa.Float(), nullable=True),
    sa.Column('throughput', sa.Float(), nullable=False),
    sa.Column('drops', sa.Float(), nullable=False),
    sa.Column('avg_hops', sa.Float(), nullable=True),
    sa.Column('ud_fraction', sa.Float(), nullable=True),
    sa.ForeignKeyConstraint(['run_id'], ['experiment_runs.id'], ondelete='CASCADE'),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index('ix_point_results_run_id', 'point_results', ['run_id'], unique=False)


def downgrade() -> None:
    """Downgrade schema."""
    op.drop_index('ix_point_results_run_id', table_name='point_results')
    op.drop_table('point_results')
    op.drop_table('experiment_runs')
