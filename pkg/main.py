from fastapi import FastAPI
from routers import home, experiments, reconfig
from db.models import Base, engine
from utils.config import configure_logging

configure_logging()

app = FastAPI(title="hermes-noc")

# Create database tables
Base.metadata.create_all(bind=engine)

app.include_router(home.router)
app.include_router(experiments.router)
app.include_router(reconfig.router)

from sqladmin import Admin
from db.admin import ExperimentRunAdmin, PointResultAdmin

admin = Admin(app, engine)

# Register admin models
admin.add_view(ExperimentRunAdmin)
admin.add_view(PointResultAdmin)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, port=8000)
